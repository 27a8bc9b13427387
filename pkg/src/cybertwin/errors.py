"""Exception hierarchy shared by all modules."""


class CybertwinError(Exception):
    """Base class for every error raised by the package."""


class BadLength(CybertwinError, ValueError):
    pass


class UnknownNode(CybertwinError, KeyError):
    pass


class OverAllocated(CybertwinError, ValueError):
    pass


class NegativeResource(CybertwinError, ValueError):
    pass


class TopologyError(CybertwinError, ValueError):
    pass


class LivelockGuard(CybertwinError, RuntimeError):
    pass


class OutsideHandler(CybertwinError, RuntimeError):
    """A state mutation was attempted outside an event handler."""


class AuthFailed(CybertwinError):
    pass


class AlreadyRegistered(CybertwinError):
    pass


class UnknownId(CybertwinError, KeyError):
    pass


class AuthRequired(CybertwinError):
    pass


class NotAttached(CybertwinError):
    pass


class NoEdgeCapacity(CybertwinError):
    pass


class UnknownService(CybertwinError, KeyError):
    pass


class ContractRejected(CybertwinError):
    def __init__(self, message, rejections=()):
        super().__init__(message)
        self.rejections = tuple(rejections)


class UnknownAccessPoint(CybertwinError, KeyError):
    pass


class MigrationInProgress(CybertwinError):
    pass


class InsufficientFunds(CybertwinError):
    pass


class UnknownListing(CybertwinError, KeyError):
    pass


class RefusedCannotFit(CybertwinError):
    pass


class NoPeering(CybertwinError):
    pass


class InvalidSpec(CybertwinError, ValueError):
    pass


class ConfigError(CybertwinError):
    """Base for configuration problems; ``diagnostics`` holds one line each."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics) or [message]


class ParseError(ConfigError):
    pass


class SchemaError(ConfigError):
    pass


class MissingArtifacts(CybertwinError):
    pass
