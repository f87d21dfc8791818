"""Operator surface: synth, pretrain, probe, analyze.

Exit codes: 0 success, 2 config error, 3 filesystem guard, 4 evaluation
failure.  `probe` is idempotent: completed (task, run, step) pairs are
recorded in a done.jsonl ledger and skipped on re-runs.  PROBETIME_WORKERS
caps the probe fan-out (default 1).
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import baselines as baselines_mod
from .backend.checkpoint import ToyMLMBackend, list_checkpoint_steps
from .backend.model import ToyMLMConfig
from .backend.training import (
    default_checkpoint_schedule,
    load_corpus,
    pretrain_toy,
    write_loss_csv,
)
from .backend.vocab import Vocabulary
from .config import BackendConfig, RunConfig, load_run_config, load_synth_config
from .core import read_record_rows, series_from_rows, write_record_rows
from .errors import ConfigError, ProbeTimeError
from .plots import render_report_plots
from .report import AnalysisSettings, assemble_report, write_report
from .runner import STRUCTURAL_FAMILIES, evaluate_task, load_suite
from .synthdata import gen_corpus, gen_probe_suites, write_synth_outputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FS_GUARD = 3
EXIT_EVAL = 4

RECORDS_FILE = "records.csv"
BASELINES_FILE = "baselines.csv"
LEDGER_FILE = "done.jsonl"
NOTES_FILE = "baseline_notes.json"

# Default package grouping by probe family (overridable per task via
# params["package"]): packages mirror the knowledge types the families test.
FAMILY_PACKAGE = {
    "minimal_pair": "linguistic_behavioral",
    "token_label": "linguistic_structural",
    "segmentation": "linguistic_structural",
    "arc_pred": "linguistic_structural",
    "arc_class": "linguistic_structural",
    "cloze": "factual",
    "multichoice": "reasoning",
}


def _err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


def _dir_nonempty(path: Path) -> bool:
    return path.is_dir() and any(path.iterdir())


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PROBETIME_WORKERS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    try:
        cfg = load_synth_config(args.config)
        if args.seed is not None:
            from dataclasses import replace

            cfg = replace(cfg, seed=args.seed)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG

    out_dir = Path(args.out)
    if _dir_nonempty(out_dir) and not args.force:
        _err(f"output directory {out_dir} is not empty (use --force to overwrite)")
        return EXIT_FS_GUARD

    corpus = gen_corpus(cfg)
    suites = gen_probe_suites(corpus)
    write_synth_outputs(out_dir, corpus, suites)
    print(f"synth: wrote corpus ({corpus.counts['sentences']} sentences, "
          f"V={corpus.counts['vocab_size']}) and probe suites to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# pretrain


def _toy_config(backend: BackendConfig, vocab: Vocabulary, seed: int) -> ToyMLMConfig:
    schedule = backend.checkpoint_schedule
    if schedule == "default":
        schedule = default_checkpoint_schedule(backend.total_steps)
    elif isinstance(schedule, int):
        every = schedule
        schedule = tuple(sorted(set(range(0, backend.total_steps + 1, every)) | {backend.total_steps}))
    return ToyMLMConfig(
        V=vocab.size,
        d_model=backend.d_model,
        n_layers=backend.n_layers,
        n_heads=backend.n_heads,
        ffn_dim=backend.ffn_dim,
        max_seq_len=backend.max_seq_len,
        mask_rate=backend.mask_rate,
        batch_size=backend.batch_size,
        total_steps=backend.total_steps,
        warmup_steps=backend.warmup_steps,
        peak_lr=backend.peak_lr,
        seed=seed,
        checkpoint_schedule=tuple(schedule),
    )


def cmd_pretrain(args) -> int:
    try:
        run_cfg = load_run_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if run_cfg.backend.kind != "toy":
        _err("external backends are a documented extension point, not implemented here")
        return EXIT_CONFIG

    seed = args.seed if args.seed is not None else run_cfg.seed
    out_root = Path(args.out) if args.out else run_cfg.resolve(run_cfg.output_dir)
    ckpt_root = out_root / "checkpoints"
    run_dir = ckpt_root / run_cfg.backend.run_tag
    if _dir_nonempty(run_dir) and not (args.resume or args.force):
        _err(f"run directory {run_dir} is not empty (use --resume or --force)")
        return EXIT_FS_GUARD
    if args.force and run_dir.exists():
        shutil.rmtree(run_dir)

    try:
        vocab = Vocabulary.from_file(run_cfg.resolve(run_cfg.backend.vocab_file))
        corpus = load_corpus(run_cfg.resolve(run_cfg.backend.corpus))
        cfg = _toy_config(run_cfg.backend, vocab, seed)
        refs, losses = pretrain_toy(
            cfg, corpus, vocab, ckpt_root, run_cfg.backend.run_tag, resume=args.resume
        )
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ProbeTimeError as exc:
        _err(str(exc))
        return EXIT_EVAL

    vocab.to_file(run_dir / "vocab.txt")
    write_loss_csv(run_dir / "loss.csv", losses)
    print(f"pretrain: {len(refs)} checkpoints under {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# probe


def _discover_runs(ckpt_dir: Path) -> dict[str, Path]:
    """Map run_tag -> run directory; accepts either one run dir or a parent."""
    if list_checkpoint_steps(ckpt_dir):
        return {ckpt_dir.name: ckpt_dir}
    runs = {}
    if ckpt_dir.is_dir():
        for child in sorted(ckpt_dir.iterdir()):
            if child.is_dir() and list_checkpoint_steps(child):
                runs[child.name] = child
    if not runs:
        raise ConfigError(f"no checkpoints found under {ckpt_dir}")
    return runs


def _run_vocab(run_dir: Path, run_cfg: RunConfig) -> Vocabulary:
    local = run_dir / "vocab.txt"
    if local.exists():
        return Vocabulary.from_file(local)
    if run_cfg.backend.vocab_file:
        return Vocabulary.from_file(run_cfg.resolve(run_cfg.backend.vocab_file))
    raise ConfigError(f"no vocab.txt in {run_dir} and no backend.vocab_file configured")


class _Ledger:
    def __init__(self, path: Path):
        self.path = path
        self.done: set[tuple] = set()
        self._lock = threading.Lock()
        if path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    entry = json.loads(line)
                    self.done.add(self._key(entry))

    @staticmethod
    def _key(entry: dict) -> tuple:
        return (
            entry.get("kind"),
            entry.get("task_id"),
            entry.get("run_tag", ""),
            entry.get("step", -1),
            entry.get("baseline", ""),
        )

    def contains(self, entry: dict) -> bool:
        return self._key(entry) in self.done

    def append(self, entry: dict) -> None:
        with self._lock:
            self.done.add(self._key(entry))
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def cmd_probe(args) -> int:
    try:
        run_cfg = load_run_config(args.config)
        ckpt_dir = Path(args.checkpoints)
        runs = _discover_runs(ckpt_dir)
        suite_data = {
            spec.task_id: load_suite(spec, run_cfg.base_dir) for spec in run_cfg.suites
        }
    except ProbeTimeError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if not run_cfg.suites:
        _err("config declares no suites")
        return EXIT_CONFIG

    if args.seed is not None:
        from dataclasses import replace

        run_cfg = replace(run_cfg, seed=args.seed)
    out_dir = Path(args.out) if args.out else run_cfg.resolve(run_cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ledger = _Ledger(out_dir / LEDGER_FILE)
    records_path = out_dir / RECORDS_FILE
    write_lock = threading.Lock()

    backends: dict[tuple[str, int], ToyMLMBackend] = {}
    backend_lock = threading.Lock()
    vocabs = {tag: _run_vocab(run_dir, run_cfg) for tag, run_dir in runs.items()}

    def load_backend(tag: str, step: int) -> ToyMLMBackend:
        key = (tag, step)
        with backend_lock:
            if key not in backends:
                backends[key] = ToyMLMBackend.load(runs[tag] / f"step_{step}", vocabs[tag])
            return backends[key]

    jobs = []
    for tag, run_dir in sorted(runs.items()):
        for step in list_checkpoint_steps(run_dir):
            for spec in run_cfg.suites:
                entry = {"kind": "checkpoint", "task_id": spec.task_id, "run_tag": tag, "step": step}
                if not ledger.contains(entry):
                    jobs.append((spec, tag, step, entry))

    evaluated = 0
    total_pairs = sum(len(list_checkpoint_steps(d)) for d in runs.values()) * len(run_cfg.suites)
    skipped = total_pairs - len(jobs)

    def run_job(job) -> None:
        nonlocal evaluated
        spec, tag, step, entry = job
        backend = load_backend(tag, step)
        record = evaluate_task(
            spec, suite_data[spec.task_id], backend, checkpoint_step=step, seed=run_cfg.seed
        )
        with write_lock:
            write_record_rows(
                records_path, [(record.task_id, tag, step, record.metric_value)], append=True
            )
            evaluated += 1
        ledger.append(
            {**entry, "value": record.metric_value, "n_items": record.n_items,
             "n_skipped": record.n_skipped}
        )

    workers = _workers()
    try:
        if workers == 1:
            for job in jobs:
                run_job(job)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for future in [pool.submit(run_job, job) for job in jobs]:
                    future.result()
        baseline_rows, notes = _probe_baselines(run_cfg, runs, vocabs, suite_data, ledger, load_backend)
    except ProbeTimeError as exc:
        _err(f"evaluation failed: {exc}")
        return EXIT_EVAL

    if baseline_rows:
        _append_baseline_rows(out_dir / BASELINES_FILE, baseline_rows)
    if notes:
        existing = {}
        notes_path = out_dir / NOTES_FILE
        if notes_path.exists():
            existing = json.loads(notes_path.read_text(encoding="utf-8"))
        existing.update(notes)
        notes_path.write_text(
            json.dumps(existing, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    print(f"probe: {evaluated} evaluations, {skipped} already done, "
          f"{len(baseline_rows)} baseline rows -> {out_dir}")
    return EXIT_OK


def _append_baseline_rows(path: Path, rows) -> None:
    new_file = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        if new_file:
            fh.write("kind,run_tag,task_id,value\n")
        for kind, run_tag, task_id, value in rows:
            fh.write(f"{kind},{run_tag},{task_id},{format(float(value), '.17g')}\n")


def _read_baseline_rows(path: Path):
    rows = []
    if not path.exists():
        return rows
    lines = path.read_text(encoding="utf-8").splitlines()
    for line in lines[1:]:
        if not line.strip():
            continue
        kind, run_tag, task_id, value = line.split(",")
        rows.append((kind, run_tag, task_id, float(value)))
    return rows


def _probe_baselines(run_cfg, runs, vocabs, suite_data, ledger, load_backend):
    """Evaluate configured baselines; capability mismatches become ledger
    skips, never failures."""
    rows = []
    notes: dict[str, str] = {}
    any_vocab = vocabs[sorted(vocabs)[0]]

    for spec_b in run_cfg.baselines:
        kind = spec_b.kind
        if kind == "random_guess":
            for task in run_cfg.suites:
                entry = {"kind": "baseline", "baseline": kind, "task_id": task.task_id}
                if ledger.contains(entry):
                    continue
                if task.family == "segmentation":
                    ledger.append({**entry, "skipped": "random guess undefined for span F1"})
                    continue
                data = suite_data[task.task_id]
                items = data.items if data.items is not None else data.splits["train"]
                value = baselines_mod.random_guess_accuracy(
                    task, items, vocab_size=any_vocab.size - len(any_vocab.special_ids)
                )
                if task.family == "cloze" and any(i.candidates is None for i in data.items):
                    notes[task.task_id] = (
                        "random_guess uses the k/V full-vocabulary approximation"
                    )
                rows.append((kind, "", task.task_id, value))
                ledger.append({**entry, "value": value})
        elif kind in ("random_vector", "static_embedding"):
            if kind == "random_vector":
                backend = baselines_mod.random_vector_backend(
                    any_vocab,
                    d=int(spec_b.params.get("d", baselines_mod.DEFAULT_RANDOM_VECTOR_DIM)),
                    seed=int(spec_b.params["seed"]) if "seed" in spec_b.params else run_cfg.seed,
                )
            else:
                backend = baselines_mod.static_embedding_backend(
                    run_cfg.resolve(str(spec_b.params["table"])), any_vocab
                )
            for task in run_cfg.suites:
                entry = {"kind": "baseline", "baseline": kind, "task_id": task.task_id}
                if ledger.contains(entry):
                    continue
                if task.family not in STRUCTURAL_FAMILIES:
                    ledger.append({**entry, "skipped": "CapabilityError: no masked-LM capability"})
                    continue
                record = evaluate_task(
                    task, suite_data[task.task_id], backend, checkpoint_step=0, seed=run_cfg.seed
                )
                rows.append((kind, "", task.task_id, record.metric_value))
                ledger.append({**entry, "value": record.metric_value})
        elif kind == "reference_checkpoint":
            for tag, run_dir in sorted(runs.items()):
                locator = str(spec_b.params.get("locator", "final"))
                steps = list_checkpoint_steps(run_dir)
                step = steps[-1] if locator == "final" else int(locator)
                for task in run_cfg.suites:
                    entry = {
                        "kind": "baseline", "baseline": kind, "task_id": task.task_id,
                        "run_tag": tag,
                    }
                    if ledger.contains(entry):
                        continue
                    backend = load_backend(tag, step)
                    reference_records = baselines_mod.reference_eval(
                        [task], suite_data, backend,
                        lambda s, d, b, checkpoint_step: evaluate_task(
                            s, d, b, checkpoint_step=checkpoint_step, seed=run_cfg.seed
                        ),
                        reference_step=step,
                    )
                    for _, record in reference_records:
                        rows.append((kind, tag, task.task_id, record.metric_value))
                        ledger.append(
                            {**entry, "value": record.metric_value, "reference_step": step}
                        )
    return rows, notes


# ---------------------------------------------------------------------------
# analyze


def cmd_analyze(args) -> int:
    try:
        run_cfg = load_run_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG

    results_dir = Path(args.results)
    records_path = results_dir / RECORDS_FILE
    if not records_path.exists():
        _err(f"no {RECORDS_FILE} in {results_dir}")
        return EXIT_CONFIG
    out_dir = Path(args.out) if args.out else results_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    settings = AnalysisSettings(
        x_list=tuple(args.x) if args.x else tuple(run_cfg.analysis.x_list),
        epsilon=args.epsilon if args.epsilon is not None else run_cfg.analysis.epsilon,
        ema_coefficient=args.ema if args.ema is not None else run_cfg.analysis.ema_coefficient,
    )

    try:
        rows = read_record_rows(records_path)
        series = series_from_rows(rows)  # canonical (task_id, step) order
    except ProbeTimeError as exc:
        _err(str(exc))
        return EXIT_EVAL

    packages = {
        spec.task_id: str(spec.params.get("package", FAMILY_PACKAGE[spec.family]))
        for spec in run_cfg.suites
    }

    run_tags = sorted({s.run_tag for s in series})
    baseline_map: dict[str, dict[str, dict[str, float]]] = {tag: {} for tag in run_tags}
    for kind, row_tag, task_id, value in _read_baseline_rows(results_dir / BASELINES_FILE):
        targets = [row_tag] if row_tag else run_tags
        for tag in targets:
            if tag in baseline_map:
                baseline_map[tag].setdefault(task_id, {})[
                    "reference" if kind == "reference_checkpoint" else kind
                ] = value
    for s in series:
        if s.steps[0] == 0:
            baseline_map[s.run_tag].setdefault(s.task_id, {})["random_init"] = s.values[0]

    notes_path = results_dir / NOTES_FILE
    notes = json.loads(notes_path.read_text(encoding="utf-8")) if notes_path.exists() else None

    report = assemble_report(series, packages, baseline_map, settings, baseline_notes=notes)
    write_report(out_dir / "report.json", report)
    plots = render_report_plots(report, out_dir / "plots")
    print(f"analyze: report.json and {len(plots)} plots -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probetime",
        description="Probe a masked LM's knowledge at every pretraining checkpoint.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus and probe suites")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--force", action="store_true")
    p_synth.set_defaults(func=cmd_synth)

    p_pre = sub.add_parser("pretrain", help="pretrain the toy MLM, saving scheduled checkpoints")
    p_pre.add_argument("--config", required=True)
    p_pre.add_argument("--out", default=None)
    p_pre.add_argument("--seed", type=int, default=None)
    p_pre.add_argument("--force", action="store_true")
    p_pre.add_argument("--resume", action="store_true")
    p_pre.set_defaults(func=cmd_pretrain)

    p_probe = sub.add_parser("probe", help="evaluate all suites on all checkpoints and baselines")
    p_probe.add_argument("checkpoints", help="checkpoint root (one run dir or its parent)")
    p_probe.add_argument("--config", required=True)
    p_probe.add_argument("--out", default=None)
    p_probe.add_argument("--seed", type=int, default=None)
    p_probe.add_argument("--force", action="store_true")
    p_probe.set_defaults(func=cmd_probe)

    p_an = sub.add_parser("analyze", help="compute dynamics metrics and emit report + plots")
    p_an.add_argument("results", help="directory holding records.csv")
    p_an.add_argument("--config", required=True)
    p_an.add_argument("--out", default=None)
    p_an.add_argument("--seed", type=int, default=None)
    p_an.add_argument("--force", action="store_true")
    p_an.add_argument("--epsilon", type=float, default=None)
    p_an.add_argument("--x", type=float, action="append", default=None)
    p_an.add_argument("--ema", type=float, default=None)
    p_an.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProbeTimeError as exc:
        _err(str(exc))
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
