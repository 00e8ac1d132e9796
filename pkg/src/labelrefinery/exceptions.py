"""Exception taxonomy shared by all pipeline modules."""


class PipelineError(Exception):
    """Base class for every error raised by this package."""


class IngestionError(PipelineError):
    """A dataset file is missing, truncated, or otherwise unreadable."""


class ConfigError(PipelineError):
    """A configuration value or key is invalid."""


class IntegrityError(PipelineError):
    """Two artifacts that must correspond (dataset/ledger/masks) do not."""


class ContractError(PipelineError):
    """A caller violated an operation's input contract."""


class AugmentationError(PipelineError):
    """An augmentation produced a degenerate geometry (e.g. zero-area crop)."""


class CheckpointError(PipelineError):
    """A checkpoint file has an unknown version or incompatible shapes."""
