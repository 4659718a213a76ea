"""Exception hierarchy shared by every module in the package."""


class MilrLabError(Exception):
    """Base class for all errors raised by milrlab."""


class InvalidParameter(MilrLabError, ValueError):
    """A numeric or structural parameter is outside its supported range."""


class InvalidInput(MilrLabError, ValueError):
    """An input value has the wrong width, length or shape."""


class ContractViolation(MilrLabError):
    """A pluggable component (preprocessor, solver, mechanism) broke its interface contract."""


class PreconditionViolation(MilrLabError, ValueError):
    """A mathematical precondition of an exact check does not hold."""


class TooLarge(MilrLabError):
    """The instance is outside the exact-enumeration regime."""


class InsufficientSample(MilrLabError, ValueError):
    """The dataset is too small for the requested sample count."""


class StreamProtocolError(MilrLabError):
    """A streamed query arrived out of its declared segment order."""
