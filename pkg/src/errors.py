"""
Error types for ResidueBench
Every error carries the CLI exit status it maps to
"""


class WorkbenchError(Exception):
    """Base class for all workbench failures"""
    exit_code = 1


class ConfigError(WorkbenchError):
    """Bad configuration: unknown key, bad value, unknown experiment"""
    exit_code = 2


class DataError(WorkbenchError):
    """Bad or missing input data"""
    exit_code = 3


class NumericError(WorkbenchError):
    """Numerical failure or violated numerical contract"""
    exit_code = 4


class DegenerateInputError(DataError):
    """Too few samples (or classes) for the requested statistic"""


class DimensionMismatchError(DataError):
    """Vector or matrix dimensions do not agree"""


class CheckpointError(DataError):
    """Checkpoint file missing, corrupt or of an incompatible version"""


class ContractViolationError(NumericError):
    """A numerical precondition (e.g. symmetry) does not hold"""


class UnsupportedOperationError(ConfigError):
    """Operation not available for this model head or configuration"""


class UnknownExperimentError(ConfigError):
    """Experiment id not in the registry"""
