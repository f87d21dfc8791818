"""Scoring contract every probe consumes.

A backend exposes at most two capabilities: masked-token distributions
(behavioral probes) and per-layer token representations (structural probes).
Representation-only baselines advertise just the latter, and behavioral
evaluators must refuse them rather than produce garbage.
"""

from __future__ import annotations

import abc
import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ..errors import CapabilityError, ContractViolation
from .vocab import Vocabulary

CAP_MASKED_LM = "masked_lm"
CAP_REPRESENTATIONS = "representations"

PROB_NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MaskedDistribution:
    """Probability vector over the vocabulary at one masked position."""

    position: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 1:
            raise ContractViolation("probs must be a length-V vector")
        if np.any(probs < 0):
            raise ContractViolation("probabilities must be non-negative")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_NORMALIZATION_TOL:
            raise ContractViolation(f"probabilities sum to {total}, not 1")

    @classmethod
    def unchecked(cls, position: int, probs: np.ndarray) -> "MaskedDistribution":
        """Bypass normalization validation; for test stubs exercising
        comparison-only semantics with deliberately unnormalized scores."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "position", position)
        object.__setattr__(obj, "probs", np.asarray(probs, dtype=np.float64))
        return obj


@dataclass(frozen=True, eq=False)
class LayerRepresentations:
    """Per-position vectors for layers 0..L; layer 0 is the embedding lookup."""

    layers: np.ndarray  # (L + 1, seq_len, d_model)

    def __post_init__(self):
        layers = np.asarray(self.layers, dtype=np.float64)
        object.__setattr__(self, "layers", layers)
        if layers.ndim != 3:
            raise ContractViolation("layer representations must have shape (L+1, n, d)")

    @property
    def n_layers(self) -> int:
        return self.layers.shape[0] - 1

    @property
    def seq_len(self) -> int:
        return self.layers.shape[1]

    @property
    def d_model(self) -> int:
        return self.layers.shape[2]

    def at(self, layer: int, position: int) -> np.ndarray:
        return self.layers[layer, position]


class ScoringBackend(abc.ABC):
    """Common interface over the toy MLM checkpoints and the baseline backends."""

    vocab: Vocabulary
    capabilities: frozenset[str]

    @property
    @abc.abstractmethod
    def num_layers(self) -> int:
        """L; encode() returns L + 1 layers."""

    @property
    @abc.abstractmethod
    def d_model(self) -> int:
        ...

    def require(self, capability: str) -> None:
        if capability not in self.capabilities:
            raise CapabilityError(
                f"{type(self).__name__} does not provide '{capability}'"
            )

    @abc.abstractmethod
    def score_masked(
        self, token_ids: Sequence[int], masked_positions: Iterable[int]
    ) -> list[MaskedDistribution]:
        ...

    @abc.abstractmethod
    def encode(self, token_ids: Sequence[int]) -> LayerRepresentations:
        ...

    def score_masked_many(
        self, requests: Sequence[tuple[Sequence[int], Sequence[int]]]
    ) -> list[list[MaskedDistribution]]:
        """Score several (token_ids, masked_positions) inputs; backends may
        override with a batched implementation."""
        return [self.score_masked(ids, pos) for ids, pos in requests]

    @abc.abstractmethod
    def state_checksum(self) -> str:
        """Digest of all backend state; probing must never change it."""


def checksum_arrays(named_arrays: Iterable[tuple[str, np.ndarray]]) -> str:
    digest = hashlib.sha256()
    for name, arr in sorted(named_arrays, key=lambda kv: kv[0]):
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.shape).encode("utf-8"))
        digest.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return digest.hexdigest()


def validate_masked_input(token_ids: Sequence[int], masked_positions, vocab: Vocabulary, max_seq_len: int):
    token_ids = list(int(t) for t in token_ids)
    if len(token_ids) > max_seq_len:
        raise ContractViolation(
            f"sequence length {len(token_ids)} exceeds max_seq_len {max_seq_len}"
        )
    positions = sorted(int(p) for p in masked_positions)
    for p in positions:
        if not (0 <= p < len(token_ids)):
            raise IndexError(f"masked position {p} out of range for length {len(token_ids)}")
        if token_ids[p] != vocab.mask_id:
            raise ContractViolation(f"position {p} does not hold the mask token")
    for t in token_ids:
        if not (0 <= t < vocab.size):
            raise IndexError(f"token id {t} out of range for vocabulary of size {vocab.size}")
    return token_ids, positions
