"""Exception types shared across the simulator."""


class QosLookupError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(QosLookupError, ValueError):
    """Invalid or unsatisfiable simulation configuration."""


class DomainError(QosLookupError, ValueError):
    """A metric fell outside the range a rating function accepts."""


class UnknownNeighbor(QosLookupError, KeyError):
    pass


class UnknownNode(QosLookupError, KeyError):
    pass


class BrokenPath(QosLookupError):
    """A QueryHit cannot continue because a reverse-path node has left."""


class TraceError(QosLookupError):
    """A trace does not contain enough records to rebuild a hit path."""
