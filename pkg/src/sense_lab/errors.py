"""Exception hierarchy shared by all sense_lab modules."""


class SenseLabError(Exception):
    """Base class for every error raised by sense_lab."""


class ConfigurationError(SenseLabError, ValueError):
    """Invalid or inconsistent configuration."""


class OutOfRangeError(SenseLabError, ValueError):
    """A numeric argument lies outside its admissible range."""


class DegenerateInputError(SenseLabError, ValueError):
    """Input for which the requested quantity is undefined (e.g. all-zero CSI)."""


class FormatError(SenseLabError, ValueError):
    """Malformed serialized data or a payload that does not match its tag."""


class StructuralError(SenseLabError, ValueError):
    """A frame/PPDU layout violates a structural rule."""


class ValidationError(SenseLabError, ValueError):
    """Scenario or configuration document failed validation.

    ``problems`` lists every offending item, not just the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ProtocolError(SenseLabError):
    """A sensing procedure was driven in an order the protocol forbids."""


class RoleError(ProtocolError):
    """A STA was asked to play a role it cannot or may not play."""


class NegotiationError(ProtocolError):
    """Capability exchange found no usable common capability."""


class ConflictError(ProtocolError):
    """Duplicate identifier (e.g. a session id already in use)."""


class NotFoundError(ProtocolError, KeyError):
    """Unknown identifier (session, STA, ...)."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""
