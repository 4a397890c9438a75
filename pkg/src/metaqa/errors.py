"""Exception hierarchy. The CLI maps each family onto an exit code."""


class MetaQAError(Exception):
    pass


class ConfigError(MetaQAError):
    """Bad configuration or usage (exit code 1)."""


class DataError(MetaQAError):
    """Malformed input data (exit code 2)."""


class CheckpointError(DataError):
    pass


class NumericError(MetaQAError):
    """Gradient check failure or non-finite loss (exit code 3)."""


class DimensionError(ValueError, MetaQAError):
    pass


class ContractError(ValueError, MetaQAError):
    pass


class DeterminismError(NumericError):
    pass


class AssemblyError(ValueError, MetaQAError):
    pass
