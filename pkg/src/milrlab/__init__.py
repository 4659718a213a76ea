"""Multi-instance leakage-resilient encryption and the lower-bound experiments built on it."""

from .errors import (ContractViolation, InsufficientSample, InvalidInput, InvalidParameter, MilrLabError,
                     PreconditionViolation, StreamProtocolError, TooLarge)

__version__ = "0.1.0"

__all__ = [
    "ContractViolation",
    "InsufficientSample",
    "InvalidInput",
    "InvalidParameter",
    "MilrLabError",
    "PreconditionViolation",
    "StreamProtocolError",
    "TooLarge",
]
