"""probetime: probe a masked language model's knowledge at every saved
pretraining checkpoint and quantify when each kind of knowledge is learned."""

__version__ = "0.1.0"

from .core import (
    CheckpointRef,
    EvalRecord,
    ProbeTaskSpec,
    ScoreSeries,
    assemble_series,
    deserialize_series,
    serialize_series,
)
from .dynamics import (
    CorrelationMatrix,
    LearningProgress,
    PhaseReport,
    correlation_matrix,
    ema,
    epsilon_phase,
    kendall_tau,
    learning_progress,
)

__all__ = [
    "CheckpointRef",
    "CorrelationMatrix",
    "EvalRecord",
    "LearningProgress",
    "PhaseReport",
    "ProbeTaskSpec",
    "ScoreSeries",
    "__version__",
    "assemble_series",
    "correlation_matrix",
    "deserialize_series",
    "ema",
    "epsilon_phase",
    "kendall_tau",
    "learning_progress",
    "serialize_series",
]
