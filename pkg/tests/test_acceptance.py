"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines
as they complete.  The end-to-end criteria pretrain the default toy preset
three times (dense corpus, identical repeat, sparse corpus); expect a few
minutes of wall time.  Set PROBETIME_SEED_SWEEP=1 to additionally check the
end-to-end ordering across the five documented extra seeds (adds ~10 min).
"""

import json
import math
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

from probetime.cli import main
from probetime.core import ScoreSeries

DEFAULT_SEED = 7
DOCUMENTED_SEEDS = (1, 2, 3, 4, 5)


def _pass(criterion: int, message: str) -> None:
    print(f"[criterion {criterion:2d}] PASS: {message}")


def _write_static_table(vocab_file: Path, table_file: Path) -> None:
    """Deterministic stand-in for a pretrained static embedding table."""
    rng = np.random.default_rng(1234)
    lines = []
    for token in vocab_file.read_text(encoding="utf-8").splitlines():
        vec = rng.normal(0, 0.5, size=64)
        lines.append(token + " " + " ".join(format(x, ".8f") for x in vec))
    table_file.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _pipeline(root: Path, preset: str, run_tag: str, seed: int) -> dict:
    """synth -> pretrain -> probe -> analyze with the default toy preset."""
    data = root / "data"
    out = root / "out"
    synth_cfg = root / "synth.json"
    synth_cfg.write_text(json.dumps({"preset": preset, "seed": seed}))
    assert main(["synth", "--config", str(synth_cfg), "--out", str(data)]) == 0
    _write_static_table(data / "vocab.txt", data / "static_table.txt")

    run_cfg = {
        "seed": seed,
        "output_dir": str(out),
        "backend": {
            "kind": "toy",
            "corpus": str(data / "corpus.txt"),
            "vocab_file": str(data / "vocab.txt"),
            "run_tag": run_tag,
            "d_model": 64, "n_layers": 2, "n_heads": 2, "ffn_dim": 128,
            "max_seq_len": 16, "mask_rate": 0.15, "batch_size": 32,
            "total_steps": 5000, "warmup_steps": 250, "peak_lr": 0.001,
            "checkpoint_schedule": 250,
        },
        "suites": [
            {"task_id": "agreement", "family": "minimal_pair",
             "dataset_locator": str(data / "probes/minimal_pairs.jsonl")},
            {"task_id": "facts", "family": "cloze",
             "dataset_locator": str(data / "probes/cloze.jsonl"), "params": {"k": 1}},
            {"task_id": "ordering", "family": "multichoice",
             "dataset_locator": str(data / "probes/multichoice.jsonl")},
            {"task_id": "categories", "family": "token_label",
             "dataset_locator": str(data / "probes/token_label")},
            {"task_id": "phrases", "family": "segmentation",
             "dataset_locator": str(data / "probes/segmentation")},
            {"task_id": "arc_exist", "family": "arc_pred",
             "dataset_locator": str(data / "probes/arcs"),
             "params": {"negative_sampling_seed": 13}},
            {"task_id": "arc_type", "family": "arc_class",
             "dataset_locator": str(data / "probes/arcs")},
        ],
        "baselines": [
            {"kind": "random_guess"},
            {"kind": "random_vector", "params": {"d": 64, "seed": 99}},
            {"kind": "static_embedding", "params": {"table": str(data / "static_table.txt")}},
            {"kind": "reference_checkpoint", "params": {"locator": "final"}},
        ],
        "analysis": {"x_list": [90, 95, 97], "epsilon": 0.05, "ema_coefficient": 0.5},
    }
    cfg_path = root / "run.json"
    cfg_path.write_text(json.dumps(run_cfg))
    assert main(["pretrain", "--config", str(cfg_path)]) == 0
    assert main(["probe", str(out / "checkpoints"), "--config", str(cfg_path)]) == 0
    assert main(["analyze", str(out), "--config", str(cfg_path)]) == 0
    return json.loads((out / "report.json").read_text())


@pytest.fixture(scope="session")
def dense_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept_dense")
    started = time.time()
    report = _pipeline(root, "fact_dense", "dense", DEFAULT_SEED)
    return {"root": root, "report": report, "elapsed": time.time() - started}


@pytest.fixture(scope="session")
def dense_repeat(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept_dense_repeat")
    report = _pipeline(root, "fact_dense", "dense", DEFAULT_SEED)
    return {"root": root, "report": report}


@pytest.fixture(scope="session")
def sparse_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept_sparse")
    report = _pipeline(root, "fact_sparse", "sparse", DEFAULT_SEED)
    return {"root": root, "report": report}


# --- criterion 1 --------------------------------------------------------------


def test_criterion_01_threshold_metrics_match_scan_oracle():
    from probetime.dynamics import epsilon_phase, learning_progress

    def scan(series, threshold):
        for step, value in series.points:
            if value >= threshold:
                return step
        raise AssertionError

    rng = random.Random(101)
    started = time.time()
    checked = 0
    for trial in range(200):
        length = rng.randint(2, 100)
        steps = sorted(rng.sample(range(10**6), length))
        values = [rng.uniform(0.001, 1.0) for _ in steps]
        if trial % 5 == 0:
            values[0] = max(values) + 0.1  # maximum at the first checkpoint
        series = ScoreSeries("t", "r", tuple(zip(steps, values)))
        peak = max(series.values)
        for x in (90, 95, 97):
            assert learning_progress(series, x).step_at_x == scan(series, (x / 100) * peak)
            if trial % 5 == 0:
                assert learning_progress(series, x).step_at_x == steps[0]
        for eps in (0.0, 0.05, 0.3):
            phase = epsilon_phase(series, eps)
            assert phase.start_step == scan(series, eps * peak)
            assert phase.end_step == scan(series, (1 - eps) * peak)
            assert phase.interval == phase.end_step - phase.start_step
            checked += 1
    elapsed = time.time() - started
    assert elapsed < 5.0
    _pass(1, f"200 series x (3 x-values + 3 epsilons) match the scan oracle in {elapsed:.2f}s")


# --- criterion 2 --------------------------------------------------------------


def test_criterion_02_kendall_matches_pair_count_oracle():
    from probetime.dynamics import kendall_tau

    def oracle(xs, ys):
        n = len(xs)
        concordant = discordant = xtie = ytie = 0
        for i in range(n):
            for j in range(i + 1, n):
                dx, dy = xs[i] - xs[j], ys[i] - ys[j]
                if dx == 0:
                    xtie += 1
                if dy == 0:
                    ytie += 1
                if dx != 0 and dy != 0:
                    if dx * dy > 0:
                        concordant += 1
                    else:
                        discordant += 1
        n0 = n * (n - 1) // 2
        return (concordant - discordant) / math.sqrt((n0 - xtie) * (n0 - ytie))

    rng = random.Random(202)
    for trial in range(100):
        steps = sorted(rng.sample(range(10_000), 14))
        if trial % 2:  # tie-heavy pairs
            xs = [rng.choice([0.25, 0.5, 0.75]) for _ in steps]
            ys = [rng.choice([0.2, 0.4, 0.6, 0.8]) for _ in steps]
        else:
            xs = [rng.uniform(0, 1) for _ in steps]
            ys = [rng.uniform(0, 1) for _ in steps]
        if len(set(xs)) == 1 or len(set(ys)) == 1:
            continue
        a = ScoreSeries("a", "r", tuple(zip(steps, xs)))
        b = ScoreSeries("b", "r", tuple(zip(steps, ys)))
        tau = kendall_tau(a, b)
        assert abs(tau - oracle(xs, ys)) <= 1e-12
        assert kendall_tau(a, b) == kendall_tau(b, a)  # exact symmetry
        assert kendall_tau(a, a) == 1.0  # exact self-correlation
    _pass(2, "tau-b equals the O(n^2) pair-count oracle within 1e-12; symmetry and self=1 exact")


# --- criterion 3 --------------------------------------------------------------


def test_criterion_03_ema_hand_values_and_rejection():
    from probetime.dynamics import ema, epsilon_phase, learning_progress
    from probetime.errors import SmoothedInputError

    pair = ScoreSeries("t", "r", ((0, 0.0), (1, 1.0)))
    assert ema(pair, 0.5).values == (0.0, 0.5)
    longer = ScoreSeries("t", "r", ((0, 0.0), (1, 1.0), (2, 1.0), (3, 0.0)))
    assert ema(longer, 0.5).values == (0.0, 0.5, 0.75, 0.375)
    constant = ScoreSeries("t", "r", tuple((i, 0.625) for i in range(6)))
    assert ema(constant, 0.5).values == constant.values
    smoothed = ema(longer, 0.5)
    with pytest.raises(SmoothedInputError):
        learning_progress(smoothed, 90)
    with pytest.raises(SmoothedInputError):
        epsilon_phase(smoothed, 0.05)
    _pass(3, "EMA(0.5) reproduces hand values, fixes constants, and raw-only metrics reject it")


# --- criterion 4 --------------------------------------------------------------


def test_criterion_04_pll_oracle_and_uniform_floor(trained_tiny):
    from conftest import UniformBackend
    from probetime.probes import (
        MinimalPairItem,
        eval_minimal_pairs,
        pll_score,
        pll_score_bruteforce,
    )

    rng = random.Random(404)
    words = ["aa", "bb", "cc", "dd", "ee", "ff"]
    for _ in range(50):
        sentence = [rng.choice(words) for _ in range(rng.randint(1, 6))]
        assert pll_score(sentence, trained_tiny) == pytest.approx(
            pll_score_bruteforce(sentence, trained_tiny), abs=1e-9
        )

    uniform = UniformBackend(trained_tiny.vocab)
    expected = math.log(1 / trained_tiny.vocab.size)
    for _ in range(10):
        sentence = [rng.choice(words) for _ in range(rng.randint(1, 6))]
        assert pll_score(sentence, uniform) == pytest.approx(expected, abs=1e-12)

    items = [
        MinimalPairItem(id=str(i), good=("aa", "bb"), bads=(("aa", "cc"),)) for i in range(10)
    ]
    assert eval_minimal_pairs(items, uniform).metric_value == 0.0
    _pass(4, "PLL equals the per-copy oracle on 50 sentences; uniform stub gives log(1/V) and accuracy 0")


# --- criterion 5 --------------------------------------------------------------


def test_criterion_05_gradient_check_and_determinism(tmp_path):
    from probetime.backend import ToyMLMConfig, Vocabulary, gradient_check, pretrain_toy

    cfg = ToyMLMConfig(V=12, d_model=8, n_layers=1, n_heads=2, ffn_dim=16, max_seq_len=8,
                       batch_size=4, total_steps=100, warmup_steps=10, peak_lr=1e-3,
                       seed=3, checkpoint_schedule=(0, 100))
    rng = np.random.default_rng(0)
    ids = rng.integers(2, 12, size=(3, 6))
    attn = np.ones((3, 6), dtype=bool)
    attn[1, 4:] = False
    ids[1, 4:] = 0
    labels = ids.copy()
    loss_mask = (rng.random((3, 6)) < 0.4) & attn
    masked = ids.copy()
    masked[loss_mask] = 1
    err = gradient_check(cfg, (masked, labels, loss_mask.astype(float), attn), samples_per_param=6)
    assert err <= 1e-4

    vocab = Vocabulary.from_tokens(["[PAD]", "[MASK]"] + [f"w{i}" for i in range(10)])
    corpus = [["w0", "w1", "w2"], ["w3", "w4", "w5"], ["w6", "w7", "w8"], ["w1", "w9", "w0"]] * 10
    train_cfg = ToyMLMConfig(V=12, d_model=8, n_layers=1, n_heads=2, ffn_dim=16, max_seq_len=8,
                             batch_size=8, total_steps=120, warmup_steps=10, peak_lr=1e-3,
                             seed=6, checkpoint_schedule=(0, 60, 120))
    pretrain_toy(train_cfg, corpus, vocab, tmp_path / "a", "r")
    pretrain_toy(train_cfg, corpus, vocab, tmp_path / "b", "r")
    for step in (0, 60, 120):
        assert (tmp_path / f"a/r/step_{step}/weights.bin").read_bytes() == (
            tmp_path / f"b/r/step_{step}/weights.bin"
        ).read_bytes()
    _pass(5, f"gradient check max rel err {err:.2e} <= 1e-4; seeded reruns bit-identical")


# --- criterion 6 --------------------------------------------------------------


def test_criterion_06_probe_recovery_and_selectivity():
    from conftest import StackBackend
    from probetime.backend import Vocabulary
    from probetime.probes import ProbeHyper, TokenLabelSentence, token_feature_stacks, train_linear_probe

    vocab = Vocabulary.from_tokens(["[PAD]", "[MASK]"] + [f"w{i}" for i in range(12)])
    rng = np.random.default_rng(606)
    d = 8
    table = rng.normal(0, 0.5, size=(3, vocab.size, d))
    for token in range(vocab.size):
        onehot = np.zeros(d)
        onehot[token % 3] = 4.0
        table[2, token] = onehot + rng.normal(0, 0.05, size=d)
    backend = StackBackend(vocab, table)
    before = backend.state_checksum()

    words = [t for t in vocab.tokens if not t.startswith("[")]
    pyrng = random.Random(607)

    def sentences(n, shuffled):
        out = []
        for _ in range(n):
            tokens = tuple(pyrng.choice(words) for _ in range(pyrng.randint(2, 6)))
            if shuffled:
                labels = tuple(pyrng.choice(["c0", "c1", "c2"]) for _ in tokens)
            else:
                labels = tuple(f"c{vocab.id(t) % 3}" for t in tokens)
            out.append(TokenLabelSentence(tokens=tokens, labels=labels))
        return out

    train_x, train_y = token_feature_stacks(sentences(120, False), backend)
    dev_x, dev_y = token_feature_stacks(sentences(40, False), backend)
    _, dev_acc = train_linear_probe(train_x, train_y, dev_x, dev_y, ProbeHyper(seed=0))
    assert dev_acc >= 0.99

    strain_x, strain_y = token_feature_stacks(sentences(120, True), backend)
    sdev_x, sdev_y = token_feature_stacks(sentences(60, True), backend)
    _, shuffled_acc = train_linear_probe(strain_x, strain_y, sdev_x, sdev_y, ProbeHyper(seed=0))
    counts = {}
    for lab in sdev_y:
        counts[lab] = counts.get(lab, 0) + 1
    majority = max(counts.values()) / len(sdev_y)
    assert abs(shuffled_acc - majority) <= 0.05

    assert backend.state_checksum() == before
    _pass(6, f"planted recovery {dev_acc:.3f} >= 0.99; shuffled {shuffled_acc:.3f} within 0.05 "
             f"of majority {majority:.3f}; backend checksum unchanged")


# --- criterion 7 --------------------------------------------------------------


def test_criterion_07_span_and_arc_oracles():
    from conftest import StackBackend
    from probetime.backend import Vocabulary
    from probetime.probes import (
        LinearProbeModel,
        ScalarMix,
        ArcSentence,
        arc_candidates,
        bio_spans,
        eval_arcs,
        pair_feature_stacks,
        span_f1,
    )

    rng = random.Random(707)
    tags = ["O", "B-NP", "I-NP", "B-VP", "I-VP"]
    for _ in range(100):
        gold = [[rng.choice(tags) for _ in range(rng.randint(1, 8))]
                for _ in range(rng.randint(1, 3))]
        pred = [[rng.choice(tags) for _ in range(len(sent))] for sent in gold]
        tp = fp = fn = 0
        for g_tags, p_tags in zip(gold, pred):
            g, p = bio_spans(g_tags), bio_spans(p_tags)
            tp += len(g & p)
            fp += len(p - g)
            fn += len(g - p)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        expected = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        assert span_f1(gold, pred) == pytest.approx(expected, abs=1e-15)

    vocab = Vocabulary.from_tokens(["[PAD]", "[MASK]"] + [f"w{i}" for i in range(8)])
    nprng = np.random.default_rng(708)
    backend = StackBackend(vocab, nprng.normal(size=(2, vocab.size, 6)))
    words = [t for t in vocab.tokens if not t.startswith("[")]
    for trial in range(100):
        data = []
        for _ in range(rng.randint(1, 4)):
            n = rng.randint(2, 5)
            tokens = tuple(rng.choice(words) for _ in range(n))
            arcs = ((0, n - 1, "sv"),) if n >= 2 else ()
            data.append(ArcSentence(tokens=tokens, arcs=arcs))
        mode = "pred" if trial % 2 == 0 else "class"
        cands = arc_candidates(data, mode, negative_seed=trial)
        if not cands:
            continue
        stacks, labels = pair_feature_stacks(data, cands, backend)
        probe = LinearProbeModel(
            weight=nprng.normal(size=(12, len(set(labels)))),
            bias=nprng.normal(size=len(set(labels))),
            scalar_mix=ScalarMix(raw_weights=nprng.normal(size=2), scale=1.0),
            label_set=tuple(sorted(set(labels))),
            pairwise=True,
        )
        record = eval_arcs(probe, data, backend, mode, negative_seed=trial)
        predictions = probe.predict(stacks)
        correct = sum(
            1 for p, gold_label in zip(predictions, labels) if probe.label_set[p] == gold_label
        )
        assert record.metric_value == pytest.approx(correct / len(labels), abs=1e-15)
        if mode == "pred":
            assert sum(1 for lab in labels if lab == "arc") == sum(
                1 for lab in labels if lab == "no_arc"
            )
    _pass(7, "span F1 matches the set-intersection oracle and arc accuracy the enumeration oracle "
             "on 100 random instances each")


# --- criterion 8 --------------------------------------------------------------


def test_criterion_08_baseline_contracts():
    from probetime.backend import Vocabulary
    from probetime.baselines import random_guess_accuracy, random_vector_backend
    from probetime.core import ProbeTaskSpec
    from probetime.errors import CapabilityError
    from probetime.probes import MultiChoiceItem, eval_multichoice, pll_score

    vocab = Vocabulary.from_tokens(["[PAD]", "[MASK]"] + [f"w{i}" for i in range(30)])
    backend = random_vector_backend(vocab, d=300, seed=5)
    assert np.all(backend.table >= -2.0) and np.all(backend.table <= 2.0)

    rng = random.Random(808)
    items = [
        MultiChoiceItem(
            id=str(i), tokens=("w0", "[MASK]"),
            choices=tuple(f"w{j}" for j in rng.sample(range(30), rng.randint(2, 5))),
            answer_index=0,
        )
        for i in range(40)
    ]
    spec = ProbeTaskSpec("mc", "multichoice", "x")
    expected = sum(1 / len(item.choices) for item in items) / len(items)
    assert random_guess_accuracy(spec, items) == pytest.approx(expected, abs=1e-15)

    with pytest.raises(CapabilityError):
        pll_score(["w0", "w1"], backend)
    with pytest.raises(CapabilityError):
        eval_multichoice(items, backend)
    _pass(8, "random vectors in [-2,2]; random guess = mean 1/#choices; representation-only "
             "backends raise CapabilityError on behavioral use")


# --- criteria 9-11: end-to-end ------------------------------------------------


def _ordering_holds(report: dict, run_tag: str) -> tuple[bool, dict]:
    lp = report["learning_progress"][run_tag]
    facts_curve = report["curves"][run_tag]["facts"]["raw"]
    agree_90 = lp["agreement"]["90"]["step_at_x"]
    facts_90 = lp["facts"]["90"]["step_at_x"] if lp["facts"]["90"] else None
    detail = {
        "lp90_agreement": agree_90,
        "lp90_facts": facts_90,
        "facts_step0": facts_curve[0],
        "facts_final": facts_curve[-1],
    }
    ok = facts_90 is not None and agree_90 < facts_90 and facts_curve[-1] > facts_curve[0]
    return ok, detail


def test_criterion_09_desk_scale_ordering(dense_run, tmp_path_factory):
    ok, detail = _ordering_holds(dense_run["report"], "dense")
    assert ok, f"ordering failed for the shipped seed: {detail}"
    assert dense_run["elapsed"] <= 900, "end-to-end run exceeded the 15-minute budget"

    line = (f"LP-90 agreement={detail['lp90_agreement']} < facts={detail['lp90_facts']}; "
            f"facts {detail['facts_step0']:.3f} -> {detail['facts_final']:.3f}; "
            f"pipeline {dense_run['elapsed']:.0f}s")
    if os.environ.get("PROBETIME_SEED_SWEEP") == "1":
        passed = 0
        for seed in DOCUMENTED_SEEDS:
            root = tmp_path_factory.mktemp(f"accept_seed{seed}")
            report = _pipeline(root, "fact_dense", "dense", seed)
            seed_ok, seed_detail = _ordering_holds(report, "dense")
            print(f"    seed {seed}: {'ok' if seed_ok else 'FAILED'} {seed_detail}")
            passed += seed_ok
        assert passed >= 4, f"only {passed}/5 documented seeds satisfy the ordering"
        line += f"; seed sweep {passed}/5"
    _pass(9, line)


def test_criterion_10_domain_contrast(dense_run, sparse_run):
    dense_facts = dense_run["report"]["curves"]["dense"]["facts"]["raw"]
    sparse_facts = sparse_run["report"]["curves"]["sparse"]["facts"]["raw"]
    dense_agree = dense_run["report"]["curves"]["dense"]["agreement"]["raw"]
    sparse_agree = sparse_run["report"]["curves"]["sparse"]["agreement"]["raw"]

    gap = dense_facts[-1] - sparse_facts[-1]
    agree_diff = abs(dense_agree[-1] - sparse_agree[-1])
    assert gap >= 0.05, f"fact-recall gap {gap:.3f} below 0.05"
    assert agree_diff < 0.05, f"agreement differs by {agree_diff:.3f}"
    _pass(10, f"final fact P@1 dense {dense_facts[-1]:.3f} vs sparse {sparse_facts[-1]:.3f} "
              f"(gap {gap:.3f} >= 0.05); agreement diff {agree_diff:.3f} < 0.05")


def test_criterion_11_pipeline_reproducibility(dense_run, dense_repeat):
    def strip(report):
        return {k: v for k, v in report.items() if k != "metadata"}

    assert strip(dense_run["report"]) == strip(dense_repeat["report"])
    _pass(11, "identical config rerun yields an identical report (timestamp metadata excluded)")


def test_trained_final_beats_static_on_token_labels(dense_run):
    """Contextual representations of the trained final checkpoint must be at
    least as decodable as a static type-embedding table; the deliberately
    ambiguous noun/verb homographs give the contextual side its edge."""
    report = dense_run["report"]
    trained_final = report["curves"]["dense"]["categories"]["raw"][-1]
    static = report["baselines"]["dense"]["categories"]["static_embedding"]
    assert trained_final >= static
    print(f"[extra] trained token-label accuracy {trained_final:.3f} >= static {static:.3f}")


def test_capability_mismatch_recorded_as_skip(dense_run):
    ledger = (dense_run["root"] / "out" / "done.jsonl").read_text().splitlines()
    skips = [json.loads(line) for line in ledger if "skipped" in line]
    behavioral = {"agreement", "facts", "ordering"}
    skipped_tasks = {
        e["task_id"] for e in skips
        if e.get("baseline") in ("random_vector", "static_embedding")
    }
    assert behavioral <= skipped_tasks  # recorded skips, not failures
