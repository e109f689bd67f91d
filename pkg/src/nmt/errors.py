"""Exception hierarchy shared across the toolkit."""


class NMTError(Exception):
    """Base class for all toolkit errors."""


class ContractError(NMTError, ValueError):
    """Raised when a precondition of an operation is violated."""


class DimensionError(ContractError):
    """Raised when tensor shapes are incompatible (a contract violation on shapes)."""


class ConfigError(NMTError, ValueError):
    """Raised for invalid experiment configuration."""


class IncompatibleCheckpointError(NMTError):
    """Raised when checkpoints disagree in record names or shapes."""


class CheckpointFormatError(NMTError):
    """Raised when a checkpoint file is malformed."""


class InsufficientHistoryError(NMTError):
    """Raised when the checkpoint history cannot satisfy an ensemble request."""


class EmptyCorpusError(NMTError):
    """Raised when no sentence pairs survive filtering."""


class TrainingDivergenceError(NMTError, FloatingPointError):
    """Raised when gradients or the loss become non-finite."""
