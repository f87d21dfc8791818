"""Shared task dispatch: load a probe suite from disk, evaluate it on a
backend.  The same path serves trajectory checkpoints, the reference
checkpoint, and the representation-only baselines, so their numbers are
comparable by construction.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

from .backend.base import ScoringBackend
from .core import EvalRecord, ProbeTaskSpec
from .errors import ConfigError
from .probes.behavioral import eval_cloze, eval_minimal_pairs, eval_multichoice
from .probes.data import (
    load_arcs,
    load_cloze,
    load_minimal_pairs,
    load_multichoice,
    load_token_labels,
)
from .probes.structural import (
    ProbeHyper,
    arc_candidates,
    eval_arcs,
    eval_segmentation,
    eval_token_labeling,
    pair_feature_stacks,
    segmentation_dev_metric,
    token_feature_stacks,
    train_linear_probe,
)

BEHAVIORAL_FAMILIES = ("minimal_pair", "cloze", "multichoice")
STRUCTURAL_FAMILIES = ("token_label", "segmentation", "arc_pred", "arc_class")


@dataclass
class SuiteData:
    """Loaded dataset(s) for one task: items for behavioral families,
    train/dev/test splits for structural ones."""

    spec: ProbeTaskSpec
    items: list | None = None
    splits: dict | None = None

    @property
    def total_items(self) -> int:
        if self.items is not None:
            return len(self.items)
        return len(self.splits["test"])


def load_suite(spec: ProbeTaskSpec, base_dir) -> SuiteData:
    """Resolve the dataset locator relative to base_dir and load it.

    Behavioral locators name one JSONL file; structural locators are a path
    prefix expanded to <locator>.{train,dev,test}.jsonl.
    """
    base = Path(base_dir)

    def resolve(name: str) -> Path:
        path = Path(name)
        return path if path.is_absolute() else base / path

    if spec.family in BEHAVIORAL_FAMILIES:
        path = resolve(spec.dataset_locator)
        loader = {
            "minimal_pair": load_minimal_pairs,
            "cloze": load_cloze,
            "multichoice": load_multichoice,
        }[spec.family]
        return SuiteData(spec=spec, items=loader(path))

    loader = load_arcs if spec.family in ("arc_pred", "arc_class") else load_token_labels
    splits = {}
    for split in ("train", "dev", "test"):
        path = resolve(f"{spec.dataset_locator}.{split}.jsonl")
        if not path.exists():
            raise ConfigError(
                f"task '{spec.task_id}': missing {split} split at {path}"
            )
        splits[split] = loader(path)
    return SuiteData(spec=spec, splits=splits)


def probe_seed(base_seed: int, task_id: str) -> int:
    """Stable per-task seed so probe training noise is constant across
    checkpoints of one run."""
    return (base_seed * 1000003 + zlib.crc32(task_id.encode("utf-8"))) % (2**31)


def evaluate_task(
    spec: ProbeTaskSpec,
    data: SuiteData,
    backend: ScoringBackend,
    *,
    checkpoint_step: int,
    seed: int = 0,
    hyper: ProbeHyper | None = None,
) -> EvalRecord:
    """Evaluate one task on one backend; structural tasks train their probe
    on the train/dev splits first and report the test metric."""
    if spec.family == "minimal_pair":
        return eval_minimal_pairs(
            data.items, backend, task_id=spec.task_id, checkpoint_step=checkpoint_step
        )
    if spec.family == "cloze":
        return eval_cloze(
            data.items, backend, k=spec.k, task_id=spec.task_id, checkpoint_step=checkpoint_step
        )
    if spec.family == "multichoice":
        return eval_multichoice(
            data.items, backend, task_id=spec.task_id, checkpoint_step=checkpoint_step
        )

    if hyper is None:
        hyper = ProbeHyper(seed=probe_seed(seed, spec.task_id))
    splits = data.splits

    if spec.family == "token_label":
        train_x, train_y = token_feature_stacks(splits["train"], backend)
        dev_x, dev_y = token_feature_stacks(splits["dev"], backend)
        probe, _ = train_linear_probe(train_x, train_y, dev_x, dev_y, hyper)
        return eval_token_labeling(
            probe, splits["test"], backend, task_id=spec.task_id, checkpoint_step=checkpoint_step
        )

    if spec.family == "segmentation":
        train_x, train_y = token_feature_stacks(splits["train"], backend)
        dev_x, dev_y = token_feature_stacks(splits["dev"], backend)
        dev_metric = segmentation_dev_metric(splits["dev"], backend)
        probe, _ = train_linear_probe(train_x, train_y, dev_x, dev_y, hyper, dev_metric=dev_metric)
        return eval_segmentation(
            probe, splits["test"], backend, task_id=spec.task_id, checkpoint_step=checkpoint_step
        )

    # arc_pred / arc_class
    mode = "pred" if spec.family == "arc_pred" else "class"
    negative_seed = int(spec.params.get("negative_sampling_seed", 0))
    train_cands = arc_candidates(splits["train"], mode, negative_seed=negative_seed)
    dev_cands = arc_candidates(splits["dev"], mode, negative_seed=negative_seed + 1)
    train_x, train_y = pair_feature_stacks(splits["train"], train_cands, backend)
    dev_x, dev_y = pair_feature_stacks(splits["dev"], dev_cands, backend)
    probe, _ = train_linear_probe(train_x, train_y, dev_x, dev_y, hyper, pairwise=True)
    return eval_arcs(
        probe,
        splits["test"],
        backend,
        mode,
        negative_seed=negative_seed + 2,
        task_id=spec.task_id,
        checkpoint_step=checkpoint_step,
    )
