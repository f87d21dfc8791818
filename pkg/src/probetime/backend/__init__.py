from .base import (
    CAP_MASKED_LM,
    CAP_REPRESENTATIONS,
    LayerRepresentations,
    MaskedDistribution,
    ScoringBackend,
    checksum_arrays,
)
from .checkpoint import (
    ToyMLMBackend,
    checkpoint_dir,
    list_checkpoint_steps,
    load_checkpoint,
    save_checkpoint,
)
from .model import (
    FULL_SCALE_REFERENCE,
    ToyMLMConfig,
    init_params,
    toy_preset,
    zero_params,
)
from .training import (
    default_checkpoint_schedule,
    gradient_check,
    load_corpus,
    pretrain_toy,
    write_loss_csv,
)
from .vocab import MASK_TOKEN, PAD_TOKEN, Vocabulary

__all__ = [
    "CAP_MASKED_LM",
    "CAP_REPRESENTATIONS",
    "FULL_SCALE_REFERENCE",
    "LayerRepresentations",
    "MASK_TOKEN",
    "MaskedDistribution",
    "PAD_TOKEN",
    "ScoringBackend",
    "ToyMLMBackend",
    "ToyMLMConfig",
    "Vocabulary",
    "checkpoint_dir",
    "checksum_arrays",
    "default_checkpoint_schedule",
    "gradient_check",
    "init_params",
    "list_checkpoint_steps",
    "load_checkpoint",
    "load_corpus",
    "pretrain_toy",
    "save_checkpoint",
    "toy_preset",
    "write_loss_csv",
    "zero_params",
]
