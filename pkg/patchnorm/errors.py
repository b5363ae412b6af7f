"""
Exception hierarchy.
Each error also derives from the closest builtin so callers may catch either.
"""


class PatchNormError(Exception):
    """Base class for all patchnorm errors"""


class DimensionError(PatchNormError, ValueError):
    """Tensor rank, shape or channel count does not fit the operation"""


class ConfigurationError(PatchNormError, ValueError):
    """Hyper-parameters or config documents are invalid"""


class UsageError(PatchNormError, RuntimeError):
    """An API was called out of order or with the wrong kind of value"""


class LoadError(PatchNormError):
    """A checkpoint or tensor file does not match what the caller expects"""


class DivergenceError(PatchNormError, ArithmeticError):
    """Training produced a non-finite loss"""


class UndefinedScoreError(PatchNormError, ValueError):
    """A discrepancy score was requested for a report with a single patch"""
