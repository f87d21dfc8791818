"""Run configuration: a single strict JSON document.

Top-level keys are exactly {backend, suites, baselines, analysis,
output_dir, seed}; unknown keys anywhere are rejected with the offending key
named, so typos surface instead of silently falling back to defaults.
Analysis defaults are x_list [90, 95, 97], epsilon 0.05, EMA coefficient
0.5.  The synth subcommand takes its own small document holding the
synthetic-language fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .baselines import BaselineSpec
from .core import ProbeTaskSpec
from .dynamics import DEFAULT_EMA_COEFFICIENT, DEFAULT_EPSILON, DEFAULT_X_LIST
from .errors import ConfigError
from .synthdata import PRESETS, SynthLanguageConfig


@dataclass(frozen=True)
class AnalysisConfig:
    x_list: tuple[float, ...] = DEFAULT_X_LIST
    epsilon: float = DEFAULT_EPSILON
    ema_coefficient: float = DEFAULT_EMA_COEFFICIENT

    def __post_init__(self):
        for x in self.x_list:
            if not (0 < x <= 100):
                raise ConfigError(f"analysis.x_list entries must be in (0, 100], got {x}")
        if not (0 <= self.epsilon < 0.5):
            raise ConfigError(f"analysis.epsilon must be in [0, 0.5), got {self.epsilon}")
        if not (0 < self.ema_coefficient <= 1):
            raise ConfigError(
                f"analysis.ema_coefficient must be in (0, 1], got {self.ema_coefficient}"
            )


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "toy" | "external"
    corpus: str = ""
    vocab_file: str = ""
    run_tag: str = "run"
    locator: str = ""  # external backends only; documented extension point
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ffn_dim: int = 128
    max_seq_len: int = 16
    mask_rate: float = 0.15
    batch_size: int = 32
    total_steps: int = 5000
    warmup_steps: int = 250
    peak_lr: float = 1e-3
    checkpoint_schedule: tuple[int, ...] | str | int = "default"

    def __post_init__(self):
        if self.kind not in ("toy", "external"):
            raise ConfigError(f"backend.kind must be 'toy' or 'external', got '{self.kind}'")
        if self.kind == "external" and not self.locator:
            raise ConfigError("backend.kind 'external' requires backend.locator")
        if self.kind == "toy" and not self.corpus:
            raise ConfigError("backend.kind 'toy' requires backend.corpus")


@dataclass(frozen=True)
class RunConfig:
    backend: BackendConfig
    suites: tuple[ProbeTaskSpec, ...]
    baselines: tuple[BaselineSpec, ...]
    analysis: AnalysisConfig
    output_dir: str
    seed: int
    base_dir: Path = field(default=Path("."), compare=False)

    def resolve(self, locator: str) -> Path:
        path = Path(locator)
        return path if path.is_absolute() else self.base_dir / path


def _strict(obj: Mapping[str, Any], allowed: tuple[str, ...], section: str) -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {section}")


def _require(obj: Mapping[str, Any], key: str, section: str) -> Any:
    if key not in obj:
        raise ConfigError(f"missing key '{key}' in {section}")
    return obj[key]


def _load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return obj


_BACKEND_KEYS = tuple(f.name for f in fields(BackendConfig))
_ANALYSIS_KEYS = tuple(f.name for f in fields(AnalysisConfig))
_TASK_KEYS = ("task_id", "family", "dataset_locator", "metric", "params")
_BASELINE_KEYS = ("kind", "params")


def load_run_config(path) -> RunConfig:
    obj = _load_json(path)
    _strict(obj, ("backend", "suites", "baselines", "analysis", "output_dir", "seed"), "config")

    seed = _require(obj, "seed", "config")
    if not isinstance(seed, int):
        raise ConfigError("key 'seed' must be an integer")
    output_dir = _require(obj, "output_dir", "config")

    backend_obj = _require(obj, "backend", "config")
    _strict(backend_obj, _BACKEND_KEYS, "config section 'backend'")
    schedule = backend_obj.get("checkpoint_schedule", "default")
    if isinstance(schedule, list):
        schedule = tuple(int(s) for s in schedule)
    backend = BackendConfig(**{**backend_obj, "checkpoint_schedule": schedule})

    suites = []
    for i, task_obj in enumerate(obj.get("suites", [])):
        _strict(task_obj, _TASK_KEYS, f"suites[{i}]")
        suites.append(
            ProbeTaskSpec(
                task_id=str(_require(task_obj, "task_id", f"suites[{i}]")),
                family=str(_require(task_obj, "family", f"suites[{i}]")),
                dataset_locator=str(_require(task_obj, "dataset_locator", f"suites[{i}]")),
                metric=str(task_obj.get("metric", "")),
                params=dict(task_obj.get("params", {})),
            )
        )
    task_ids = [s.task_id for s in suites]
    if len(set(task_ids)) != len(task_ids):
        raise ConfigError("duplicate task_id in 'suites'")

    baseline_specs = []
    for i, b_obj in enumerate(obj.get("baselines", [])):
        _strict(b_obj, _BASELINE_KEYS, f"baselines[{i}]")
        baseline_specs.append(
            BaselineSpec(
                kind=str(_require(b_obj, "kind", f"baselines[{i}]")),
                params=dict(b_obj.get("params", {})),
            )
        )

    analysis_obj = obj.get("analysis", {})
    _strict(analysis_obj, _ANALYSIS_KEYS, "config section 'analysis'")
    analysis_kwargs = dict(analysis_obj)
    if "x_list" in analysis_kwargs:
        analysis_kwargs["x_list"] = tuple(analysis_kwargs["x_list"])
    analysis = AnalysisConfig(**analysis_kwargs)

    return RunConfig(
        backend=backend,
        suites=tuple(suites),
        baselines=tuple(baseline_specs),
        analysis=analysis,
        output_dir=str(output_dir),
        seed=seed,
        base_dir=Path(path).resolve().parent,
    )


_SYNTH_KEYS = tuple(f.name for f in fields(SynthLanguageConfig)) + ("preset",)


def load_synth_config(path) -> SynthLanguageConfig:
    """Synth config document: SynthLanguageConfig fields, optionally starting
    from a named preset ('fact_dense' or 'fact_sparse')."""
    obj = _load_json(path)
    _strict(obj, _SYNTH_KEYS, "synth config")
    preset_name = obj.pop("preset", None)
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(
                f"unknown preset '{preset_name}'; available: {sorted(PRESETS)}"
            )
        base = PRESETS[preset_name]
        merged = {f.name: getattr(base, f.name) for f in fields(SynthLanguageConfig)}
        merged.update(obj)
        if "seed" not in obj:
            raise ConfigError("missing key 'seed' in synth config")
        return SynthLanguageConfig(**merged)
    if "seed" not in obj:
        raise ConfigError("missing key 'seed' in synth config")
    defaults = {f.name for f in fields(SynthLanguageConfig)}
    return SynthLanguageConfig(**{k: v for k, v in obj.items() if k in defaults})
