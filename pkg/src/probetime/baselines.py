"""Relative-performance references: random guess, random vectors + linear
classifier, static embeddings + linear classifier, and a reference (final)
checkpoint probed through the identical evaluation path.

The representation-only backends advertise no masked-LM capability, so
behavioral evaluators refuse them instead of producing garbage numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .backend.base import (
    CAP_REPRESENTATIONS,
    LayerRepresentations,
    ScoringBackend,
    checksum_arrays,
)
from .backend.vocab import Vocabulary
from .core import ProbeTaskSpec
from .errors import CapabilityError, ConfigError, ContractViolation, NoData, ParseError

BASELINE_KINDS = ("random_guess", "random_vector", "static_embedding", "reference_checkpoint")

# Dimension convention for random type vectors when none is configured; a
# convention of the static-embedding literature, not a measured fact.
DEFAULT_RANDOM_VECTOR_DIM = 300

# The random-initialization reference is conventionally averaged over this
# many independently seeded untrained models; at desk scale it is read off
# the step-0 record of each pretraining run present.
RANDOM_INIT_TRIALS = 3

_REQUIRED_PARAMS = {
    "random_guess": (),
    "random_vector": ("d", "seed"),
    "static_embedding": ("table",),
    "reference_checkpoint": ("locator",),
}


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        if self.kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline kind '{self.kind}'")
        for key in _REQUIRED_PARAMS[self.kind]:
            if key not in self.params:
                raise ConfigError(f"baseline '{self.kind}' requires param '{key}'")


def random_guess_accuracy(
    spec: ProbeTaskSpec,
    items: Sequence,
    *,
    n_labels: int | None = None,
    vocab_size: int | None = None,
) -> float:
    """Expected accuracy of uniform guessing: mean over items of 1/#choices.

    Cloze tasks without candidate lists use the documented k/V approximation
    over the full vocabulary pool.
    """
    if not items and spec.family != "token_label":
        raise NoData("cannot compute a random-guess reference without items")
    if spec.family == "minimal_pair":
        return float(np.mean([1.0 / (1 + len(item.bads)) for item in items]))
    if spec.family == "multichoice":
        return float(np.mean([1.0 / len(item.choices) for item in items]))
    if spec.family == "cloze":
        k = spec.k
        sizes = []
        for item in items:
            if item.candidates is not None:
                sizes.append(len(item.candidates))
            else:
                if vocab_size is None:
                    raise ContractViolation(
                        "full-vocabulary cloze random guess needs vocab_size (k/V approximation)"
                    )
                sizes.append(vocab_size)
        return float(np.mean([min(1.0, k / s) for s in sizes]))
    if spec.family in ("token_label", "segmentation", "arc_class"):
        if n_labels is None:
            labels = {lab for item in items for lab in item.labels} if spec.family != "arc_class" else {
                lab for item in items for _, _, lab in item.arcs
            }
            n_labels = len(labels)
        if n_labels < 1:
            raise NoData("no labels to guess among")
        return 1.0 / n_labels
    if spec.family == "arc_pred":
        return 0.5  # balanced binary candidate set
    raise ContractViolation(f"unsupported family '{spec.family}'")


class _SingleLayerBackend(ScoringBackend):
    """Shared machinery for representation-only (one-layer) backends."""

    capabilities = frozenset({CAP_REPRESENTATIONS})

    def __init__(self, vocab: Vocabulary, table: np.ndarray):
        if table.shape[0] != vocab.size:
            raise ContractViolation("embedding table must cover the vocabulary")
        self.vocab = vocab
        self.table = np.asarray(table, dtype=np.float64)

    @property
    def num_layers(self) -> int:
        return 0

    @property
    def d_model(self) -> int:
        return int(self.table.shape[1])

    def score_masked(self, token_ids, masked_positions):
        raise CapabilityError(f"{type(self).__name__} has no masked-LM capability")

    def encode(self, token_ids) -> LayerRepresentations:
        ids = [int(t) for t in token_ids]
        for t in ids:
            if not (0 <= t < self.vocab.size):
                raise IndexError(f"token id {t} out of range")
        return LayerRepresentations(layers=self.table[ids][None, :, :])

    def state_checksum(self) -> str:
        return checksum_arrays([("table", self.table)])


class RandomVectorBackend(_SingleLayerBackend):
    """One fixed vector per vocabulary type, uniform over [-2, 2]^d."""

    def __init__(self, vocab: Vocabulary, d: int, seed: int):
        if d < 1:
            raise ConfigError("random vector dimension must be positive")
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x72766563]))
        table = rng.uniform(-2.0, 2.0, size=(vocab.size, d))
        super().__init__(vocab, table)
        self.seed = seed


def random_vector_backend(
    vocab: Vocabulary, d: int = DEFAULT_RANDOM_VECTOR_DIM, seed: int = 0
) -> RandomVectorBackend:
    return RandomVectorBackend(vocab, d, seed)


class StaticEmbeddingBackend(_SingleLayerBackend):
    """Pretrained static table lookup; words missing from the table map to
    the zero vector and are counted in missing_count."""

    def __init__(self, vocab: Vocabulary, vectors: Mapping[str, np.ndarray], dim: int):
        table = np.zeros((vocab.size, dim))
        missing = 0
        for i, token in enumerate(vocab.tokens):
            vec = vectors.get(token)
            if vec is None:
                missing += 1
            else:
                table[i] = vec
        super().__init__(vocab, table)
        self.missing_count = missing


def parse_embedding_table(path) -> tuple[dict[str, np.ndarray], int]:
    """One line per word: ``word v1 v2 ... vd``, space-separated decimals."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError("expected a word followed by vector components", line=i + 1)
        word = parts[0]
        if word in vectors:
            raise ParseError(f"duplicate word {word!r}", line=i + 1, field="word")
        try:
            vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad vector component: {exc}", line=i + 1) from None
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise ParseError(
                f"vector of dimension {vec.size} in a {dim}-dimensional table", line=i + 1
            )
        vectors[word] = vec
    if not vectors:
        raise ParseError("empty embedding table")
    return vectors, int(dim)


def static_embedding_backend(table_file, vocab: Vocabulary) -> StaticEmbeddingBackend:
    vectors, dim = parse_embedding_table(table_file)
    return StaticEmbeddingBackend(vocab, vectors, dim)


def reference_eval(tasks, datasets, backend, evaluate, reference_step: int):
    """Probe the reference checkpoint through the identical evaluation path.

    ``evaluate`` is the shared task-dispatch used for trajectory checkpoints;
    records come back tagged run_tag="reference".
    """
    records = []
    for spec in tasks:
        record = evaluate(spec, datasets[spec.task_id], backend, checkpoint_step=reference_step)
        records.append(("reference", record))
    return records
