"""Checkpoint archive format and the scoring backend over a loaded checkpoint.

Layout on disk: ``<run_tag>/step_<N>/manifest.json`` + ``weights.bin``.  The
manifest lists tensor names, shapes and byte offsets plus a config echo; the
binary file is the concatenation of little-endian float64 buffers in manifest
order.  Serialization is canonical, so load-then-resave is byte-identical.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .base import (
    CAP_MASKED_LM,
    CAP_REPRESENTATIONS,
    LayerRepresentations,
    MaskedDistribution,
    ScoringBackend,
    checksum_arrays,
    validate_masked_input,
)
from .model import ToyMLMConfig, _softmax, forward
from .vocab import Vocabulary

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
FORMAT_VERSION = 1


def save_checkpoint(
    directory,
    params: dict[str, np.ndarray],
    cfg: ToyMLMConfig,
    step: int,
    run_tag: str,
    extra_tensors: dict[str, np.ndarray] | None = None,
) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors = dict(params)
    if extra_tensors:
        tensors.update(extra_tensors)

    entries = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        blob = arr.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "<f8", "offset": offset,
             "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)

    manifest = {
        "format_version": FORMAT_VERSION,
        "run_tag": run_tag,
        "step": int(step),
        "config": cfg.to_dict(),
        "tensors": entries,
    }
    (directory / WEIGHTS_NAME).write_bytes(b"".join(blobs))
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return directory


def load_checkpoint(directory):
    """Returns (params, extra_tensors, config, step, run_tag)."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read checkpoint manifest in {directory}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint format {manifest.get('format_version')!r}")
    blob = (directory / WEIGHTS_NAME).read_bytes()
    cfg = ToyMLMConfig.from_dict(manifest["config"])
    params: dict[str, np.ndarray] = {}
    extra: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise ParseError(f"tensor '{entry['name']}' extends past end of weights file")
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f8").reshape(entry["shape"]).copy()
        target = extra if entry["name"].startswith("opt.") else params
        target[entry["name"]] = arr
    return params, extra, cfg, int(manifest["step"]), manifest["run_tag"]


def checkpoint_dir(root, run_tag: str, step: int) -> Path:
    return Path(root) / run_tag / f"step_{step}"


def list_checkpoint_steps(run_dir) -> list[int]:
    run_dir = Path(run_dir)
    steps = []
    for child in run_dir.iterdir() if run_dir.is_dir() else ():
        if child.is_dir() and child.name.startswith("step_") and (child / MANIFEST_NAME).exists():
            try:
                steps.append(int(child.name[len("step_"):]))
            except ValueError:
                continue
    return sorted(steps)


class ToyMLMBackend(ScoringBackend):
    """Immutable scoring view over one set of toy-MLM parameters."""

    capabilities = frozenset({CAP_MASKED_LM, CAP_REPRESENTATIONS})

    def __init__(self, params: dict[str, np.ndarray], cfg: ToyMLMConfig, vocab: Vocabulary):
        if vocab.size != cfg.V:
            raise ParseError(f"vocabulary size {vocab.size} does not match config V={cfg.V}")
        self.params = params
        self.cfg = cfg
        self.vocab = vocab

    @classmethod
    def load(cls, directory, vocab: Vocabulary) -> "ToyMLMBackend":
        params, _, cfg, _, _ = load_checkpoint(directory)
        return cls(params, cfg, vocab)

    @property
    def num_layers(self) -> int:
        return self.cfg.n_layers

    @property
    def d_model(self) -> int:
        return self.cfg.d_model

    def score_masked(self, token_ids, masked_positions) -> list[MaskedDistribution]:
        token_ids, positions = validate_masked_input(
            token_ids, masked_positions, self.vocab, self.cfg.max_seq_len
        )
        logits, _ = forward(self.params, self.cfg, np.asarray([token_ids]))
        probs = _softmax(logits[0], axis=-1)
        return [MaskedDistribution(position=p, probs=probs[p]) for p in positions]

    def score_masked_many(self, requests):
        """Batched variant: pads all requests to a common length and runs one
        forward pass; padding keys are excluded from attention so each result
        matches the single-sequence path."""
        if not requests:
            return []
        validated = [
            validate_masked_input(ids, pos, self.vocab, self.cfg.max_seq_len)
            for ids, pos in requests
        ]
        max_len = max(len(ids) for ids, _ in validated)
        batch = np.full((len(validated), max_len), self.vocab.pad_id, dtype=np.int64)
        mask = np.zeros((len(validated), max_len), dtype=bool)
        for row, (ids, _) in enumerate(validated):
            batch[row, : len(ids)] = ids
            mask[row, : len(ids)] = True
        logits, _ = forward(self.params, self.cfg, batch, attn_mask=mask)
        out = []
        for row, (_, positions) in enumerate(validated):
            probs = _softmax(logits[row], axis=-1)
            out.append([MaskedDistribution(position=p, probs=probs[p]) for p in positions])
        return out

    def encode(self, token_ids) -> LayerRepresentations:
        token_ids = [int(t) for t in token_ids]
        for t in token_ids:
            if not (0 <= t < self.cfg.V):
                raise IndexError(f"token id {t} out of range")
        _, cache = forward(self.params, self.cfg, np.asarray([token_ids]), collect_layers=True)
        stream = np.stack([layer[0] for layer in cache["layer_stream"]], axis=0)
        return LayerRepresentations(layers=stream)

    def state_checksum(self) -> str:
        return checksum_arrays(self.params.items())


def heldout_perplexity(loss: float) -> float:
    return math.exp(min(loss, 50.0))
