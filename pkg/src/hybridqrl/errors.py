"""Exception types shared across the package."""


class HybridQRLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HybridQRLError, ValueError):
    """Invalid configuration value or unsupported setting."""


class ArgumentError(HybridQRLError, ValueError):
    """Bad argument: wrong shape, index out of range, etc."""


class StateError(HybridQRLError, RuntimeError):
    """Operation called in the wrong state (e.g. backward without forward)."""


class NormDriftError(HybridQRLError, ArithmeticError):
    """Statevector norm drifted away from 1 beyond the allowed tolerance."""


class NumericalError(HybridQRLError, ArithmeticError):
    """A numerical routine could not produce a well-defined result."""


class ArchitectureError(HybridQRLError, ValueError):
    """Network architectures do not match (checkpoint load, target sync)."""


class CheckpointError(HybridQRLError, IOError):
    """Checkpoint file is corrupted or has an unsupported version."""
