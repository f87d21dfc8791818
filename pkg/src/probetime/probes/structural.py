"""Classifier probes on frozen representations.

A softmax-normalized scalar mix pools the backend's layers into one vector
per token (optionally scaled by a learned constant), and a linear classifier
with no hidden layers maps it to labels.  Only the probe parameters train;
the backend is read-only throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..backend.base import CAP_REPRESENTATIONS, LayerRepresentations, ScoringBackend
from ..core import EvalRecord
from ..errors import ContractViolation, DataError, NoData
from .data import ArcSentence, TokenLabelSentence

UNSEEN_LABEL = "<UNSEEN>"

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class ScalarMix:
    """Learnable layer-weighting: softmax(raw_weights) unless normalize is
    off (raw-weight ablation mode), times a learned scale."""

    raw_weights: np.ndarray
    scale: float = 1.0
    normalize: bool = True

    def __post_init__(self):
        self.raw_weights = np.asarray(self.raw_weights, dtype=np.float64)
        if self.raw_weights.ndim != 1:
            raise ContractViolation("scalar mix weights must be a vector over layers")
        if not np.isfinite(self.scale):
            raise ContractViolation("scalar mix scale must be finite")

    @classmethod
    def uniform(cls, n_layers_plus_one: int, normalize: bool = True) -> "ScalarMix":
        return cls(raw_weights=np.zeros(n_layers_plus_one), scale=1.0, normalize=normalize)

    def coefficients(self) -> np.ndarray:
        if not self.normalize:
            return self.raw_weights.copy()
        shifted = self.raw_weights - self.raw_weights.max()
        e = np.exp(shifted)
        return e / e.sum()


def mix(layers: LayerRepresentations, position: int, scalar_mix: ScalarMix) -> np.ndarray:
    """scale * sum_l coeff_l * f^l(position)."""
    if not (0 <= position < layers.seq_len):
        raise IndexError(f"position {position} out of range for length {layers.seq_len}")
    coeffs = scalar_mix.coefficients()
    if coeffs.shape[0] != layers.layers.shape[0]:
        raise ContractViolation(
            f"mix over {coeffs.shape[0]} layers applied to {layers.layers.shape[0]}-layer stack"
        )
    return scalar_mix.scale * np.einsum("l,ld->d", coeffs, layers.layers[:, position, :])


@dataclass
class LinearProbeModel:
    weight: np.ndarray  # (input_width, n_labels)
    bias: np.ndarray  # (n_labels,)
    scalar_mix: ScalarMix
    label_set: tuple[str, ...]
    pairwise: bool = False

    def label_index(self, label: str) -> int | None:
        try:
            return self.label_set.index(label)
        except ValueError:
            return None

    def logits(self, stacks: np.ndarray) -> np.ndarray:
        """stacks: (N, L+1, d) for token probes or (N, 2, L+1, d) for pairwise."""
        coeffs = self.scalar_mix.coefficients()
        if self.pairwise:
            mixed_h = self.scalar_mix.scale * np.einsum("nld,l->nd", stacks[:, 0], coeffs)
            mixed_d = self.scalar_mix.scale * np.einsum("nld,l->nd", stacks[:, 1], coeffs)
            mixed = np.concatenate([mixed_h, mixed_d], axis=1)
        else:
            mixed = self.scalar_mix.scale * np.einsum("nld,l->nd", stacks, coeffs)
        return mixed @ self.weight + self.bias

    def predict(self, stacks: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(stacks), axis=1)


@dataclass(frozen=True)
class ProbeHyper:
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    normalize_mix: bool = True


# ---------------------------------------------------------------------------
# feature extraction


def _encode_cached(backend: ScoringBackend):
    cache: dict[tuple[int, ...], LayerRepresentations] = {}

    def encode(token_ids: tuple[int, ...]) -> LayerRepresentations:
        if token_ids not in cache:
            cache[token_ids] = backend.encode(list(token_ids))
        return cache[token_ids]

    return encode


def token_feature_stacks(
    data: Sequence[TokenLabelSentence], backend: ScoringBackend
) -> tuple[np.ndarray, list[str]]:
    """Stack (L+1, d) layer features for every token; returns (N, L+1, d)."""
    backend.require(CAP_REPRESENTATIONS)
    encode = _encode_cached(backend)
    stacks = []
    labels = []
    for sent in data:
        ids = tuple(backend.vocab.encode(sent.tokens))
        reps = encode(ids)
        for pos, label in enumerate(sent.labels):
            stacks.append(reps.layers[:, pos, :])
            labels.append(label)
    if not stacks:
        raise NoData("no tokens in dataset")
    return np.stack(stacks), labels


def arc_candidates(
    data: Sequence[ArcSentence], mode: str, negative_seed: int = 0
) -> list[tuple[int, int, int, str]]:
    """(sentence_index, head, dep, label) candidates.

    pred mode: gold arcs labelled "arc" plus an equal number of "no_arc"
    ordered pairs sampled uniformly per sentence.  Sentences with fewer than
    two tokens, no gold arcs, or too few non-arc pairs to balance are
    skipped, preserving the exact 1:1 balance of the candidate set.
    class mode: gold arcs with their own labels.
    """
    if mode not in ("pred", "class"):
        raise ContractViolation(f"arc mode must be 'pred' or 'class', got {mode}")
    out: list[tuple[int, int, int, str]] = []
    if mode == "class":
        for si, sent in enumerate(data):
            for head, dep, label in sent.arcs:
                out.append((si, head, dep, label))
        return out
    rng = np.random.default_rng(negative_seed)
    for si, sent in enumerate(data):
        n = len(sent.tokens)
        if n < 2 or not sent.arcs:
            continue
        gold = {(h, d) for h, d, _ in sent.arcs}
        non_arcs = [(h, d) for h in range(n) for d in range(n) if h != d and (h, d) not in gold]
        if len(non_arcs) < len(gold):
            continue
        chosen = rng.choice(len(non_arcs), size=len(gold), replace=False)
        for h, d, _ in sent.arcs:
            out.append((si, h, d, "arc"))
        for idx in sorted(int(i) for i in chosen):
            h, d = non_arcs[idx]
            out.append((si, h, d, "no_arc"))
    return out


def pair_feature_stacks(
    data: Sequence[ArcSentence],
    candidates: Sequence[tuple[int, int, int, str]],
    backend: ScoringBackend,
) -> tuple[np.ndarray, list[str]]:
    """(N, 2, L+1, d) head/dep layer stacks for arc candidates."""
    backend.require(CAP_REPRESENTATIONS)
    encode = _encode_cached(backend)
    stacks = []
    labels = []
    for si, head, dep, label in candidates:
        ids = tuple(backend.vocab.encode(data[si].tokens))
        reps = encode(ids)
        stacks.append(np.stack([reps.layers[:, head, :], reps.layers[:, dep, :]]))
        labels.append(label)
    if not stacks:
        raise NoData("no arc candidates")
    return np.stack(stacks), labels


# ---------------------------------------------------------------------------
# training


def _softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_linear_probe(
    train_stacks: np.ndarray,
    train_labels: Sequence[str],
    dev_stacks: np.ndarray,
    dev_labels: Sequence[str],
    hyper: ProbeHyper,
    pairwise: bool = False,
    dev_metric: Callable[[LinearProbeModel, np.ndarray, Sequence[str]], float] | None = None,
) -> tuple[LinearProbeModel, float]:
    """Adam-trained softmax regression over mixed features; the probe from
    the dev-best epoch is returned (ties go to the earlier epoch).

    With zero epochs the initialization itself is returned.
    """
    label_set = tuple(sorted(set(train_labels)))
    n_labels = len(label_set)
    label_to_idx = {lab: i for i, lab in enumerate(label_set)}
    y = np.array([label_to_idx[lab] for lab in train_labels], dtype=np.int64)

    n_layers_plus_one = train_stacks.shape[2] if pairwise else train_stacks.shape[1]
    d = train_stacks.shape[-1]
    input_width = 2 * d if pairwise else d

    model = LinearProbeModel(
        weight=np.zeros((input_width, n_labels)),
        bias=np.zeros(n_labels),
        scalar_mix=ScalarMix.uniform(n_layers_plus_one, normalize=hyper.normalize_mix),
        label_set=label_set,
        pairwise=pairwise,
    )

    if dev_metric is None:
        dev_metric = _accuracy_metric

    best = _clone_probe(model)
    best_score = dev_metric(model, dev_stacks, dev_labels)

    n = train_stacks.shape[0]
    rng = np.random.default_rng(hyper.seed)

    m_w = np.zeros_like(model.weight)
    v_w = np.zeros_like(model.weight)
    m_b = np.zeros_like(model.bias)
    v_b = np.zeros_like(model.bias)
    m_a = np.zeros_like(model.scalar_mix.raw_weights)
    v_a = np.zeros_like(model.scalar_mix.raw_weights)
    m_g = v_g = 0.0
    t = 0
    b1, b2 = ADAM_BETAS

    def adam(param, grad, m, v):
        m *= b1
        m += (1 - b1) * grad
        v *= b2
        v += (1 - b2) * grad * grad
        param -= hyper.lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + ADAM_EPS)

    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch_size):
            idx = order[start : start + hyper.batch_size]
            xb = train_stacks[idx]
            yb = y[idx]
            bsz = len(idx)

            coeffs = model.scalar_mix.coefficients()
            gamma = model.scalar_mix.scale
            if pairwise:
                u_h = np.einsum("nld,l->nd", xb[:, 0], coeffs)
                u_d = np.einsum("nld,l->nd", xb[:, 1], coeffs)
                u = np.concatenate([u_h, u_d], axis=1)
            else:
                u = np.einsum("nld,l->nd", xb, coeffs)
            mixed = gamma * u
            logits = mixed @ model.weight + model.bias

            probs = _softmax_rows(logits)
            dlogits = probs
            dlogits[np.arange(bsz), yb] -= 1.0
            dlogits /= bsz

            dw = mixed.T @ dlogits
            db = dlogits.sum(axis=0)
            dmixed = dlogits @ model.weight.T
            dgamma = float((dmixed * u).sum())
            du = gamma * dmixed
            if pairwise:
                dcoeff = np.einsum("nd,nld->l", du[:, :d], xb[:, 0]) + np.einsum(
                    "nd,nld->l", du[:, d:], xb[:, 1]
                )
            else:
                dcoeff = np.einsum("nd,nld->l", du, xb)
            if model.scalar_mix.normalize:
                dalpha = coeffs * (dcoeff - float(coeffs @ dcoeff))
            else:
                dalpha = dcoeff

            t += 1
            adam(model.weight, dw, m_w, v_w)
            adam(model.bias, db, m_b, v_b)
            adam(model.scalar_mix.raw_weights, dalpha, m_a, v_a)
            # scalar gamma update, same rule
            m_g = b1 * m_g + (1 - b1) * dgamma
            v_g = b2 * v_g + (1 - b2) * dgamma * dgamma
            model.scalar_mix.scale -= hyper.lr * (m_g / (1 - b1**t)) / (
                np.sqrt(v_g / (1 - b2**t)) + ADAM_EPS
            )

        score = dev_metric(model, dev_stacks, dev_labels)
        if score > best_score:
            best_score = score
            best = _clone_probe(model)

    return best, best_score


def _clone_probe(model: LinearProbeModel) -> LinearProbeModel:
    return LinearProbeModel(
        weight=model.weight.copy(),
        bias=model.bias.copy(),
        scalar_mix=ScalarMix(
            raw_weights=model.scalar_mix.raw_weights.copy(),
            scale=model.scalar_mix.scale,
            normalize=model.scalar_mix.normalize,
        ),
        label_set=model.label_set,
        pairwise=model.pairwise,
    )


def _accuracy_metric(model: LinearProbeModel, stacks: np.ndarray, labels: Sequence[str]) -> float:
    if stacks.shape[0] == 0:
        return 0.0
    predictions = model.predict(stacks)
    correct = 0
    for pred, gold in zip(predictions, labels):
        gold_idx = model.label_index(gold)
        # unseen dev labels can never be predicted and count as wrong
        if gold_idx is not None and pred == gold_idx:
            correct += 1
    return correct / len(labels)


# ---------------------------------------------------------------------------
# evaluation


def eval_token_labeling(
    probe: LinearProbeModel,
    data: Sequence[TokenLabelSentence],
    backend: ScoringBackend,
    *,
    task_id: str = "",
    checkpoint_step: int = 0,
) -> EvalRecord:
    stacks, labels = token_feature_stacks(data, backend)
    accuracy = _accuracy_metric(probe, stacks, labels)
    return EvalRecord(
        task_id=task_id,
        checkpoint_step=checkpoint_step,
        metric_value=accuracy,
        n_items=len(labels),
        n_skipped=0,
    )


def bio_spans(tags: Sequence[str]) -> set[tuple[int, int, str]]:
    """Decode BIO tags into labelled (start, end_exclusive, type) spans.

    An I- tag continuing a mismatched type starts a new span (the
    conservative repair).  Tags must be 'O', 'B-<type>' or 'I-<type>'.
    """
    spans: set[tuple[int, int, str]] = set()
    start = None
    current = None
    for i, tag in enumerate(tags):
        if tag == "O":
            if current is not None:
                spans.add((start, i, current))
                current = None
            continue
        if len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            raise DataError(f"tag {tag!r} is not in BIO format")
        kind, span_type = tag[0], tag[2:]
        if kind == "B" or current != span_type:
            if current is not None:
                spans.add((start, i, current))
            start = i
            current = span_type
    if current is not None:
        spans.add((start, len(tags), current))
    return spans


def span_f1(
    gold_sequences: Sequence[Sequence[str]], predicted_sequences: Sequence[Sequence[str]]
) -> float:
    """Micro-averaged labelled span F1; 0 when precision + recall is 0."""
    tp = fp = fn = 0
    for gold_tags, pred_tags in zip(gold_sequences, predicted_sequences):
        gold = bio_spans(gold_tags)
        pred = bio_spans(pred_tags)
        tp += len(gold & pred)
        fp += len(pred - gold)
        fn += len(gold - pred)
    if 2 * tp + fp + fn == 0:
        return 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _validate_bio_labels(data: Sequence[TokenLabelSentence]) -> None:
    for sent in data:
        for tag in sent.labels:
            if tag != "O" and (len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI"):
                raise DataError(f"segmentation label {tag!r} is not in BIO format")


def predict_tag_sequences(
    probe: LinearProbeModel, data: Sequence[TokenLabelSentence], backend: ScoringBackend
) -> list[list[str]]:
    encode = _encode_cached(backend)
    out = []
    for sent in data:
        ids = tuple(backend.vocab.encode(sent.tokens))
        reps = encode(ids)
        stacks = reps.layers.transpose(1, 0, 2)  # (n, L+1, d)
        preds = probe.predict(stacks)
        out.append([probe.label_set[p] for p in preds])
    return out


def eval_segmentation(
    probe: LinearProbeModel,
    data: Sequence[TokenLabelSentence],
    backend: ScoringBackend,
    *,
    task_id: str = "",
    checkpoint_step: int = 0,
) -> EvalRecord:
    _validate_bio_labels(data)
    predicted = predict_tag_sequences(probe, data, backend)
    value = span_f1([s.labels for s in data], predicted)
    return EvalRecord(
        task_id=task_id,
        checkpoint_step=checkpoint_step,
        metric_value=value,
        n_items=len(data),
        n_skipped=0,
    )


def eval_arcs(
    probe: LinearProbeModel,
    data: Sequence[ArcSentence],
    backend: ScoringBackend,
    mode: str,
    *,
    negative_seed: int = 0,
    task_id: str = "",
    checkpoint_step: int = 0,
) -> EvalRecord:
    candidates = arc_candidates(data, mode, negative_seed=negative_seed)
    if not candidates:
        raise NoData("no arc candidates to evaluate")
    stacks, labels = pair_feature_stacks(data, candidates, backend)
    accuracy = _accuracy_metric(probe, stacks, labels)
    n_sentences_used = len({si for si, _, _, _ in candidates})
    return EvalRecord(
        task_id=task_id,
        checkpoint_step=checkpoint_step,
        metric_value=accuracy,
        n_items=len(candidates),
        n_skipped=len(data) - n_sentences_used,
    )


def segmentation_dev_metric(data: Sequence[TokenLabelSentence], backend: ScoringBackend):
    """Dev-selection metric for segmentation probes: span F1 on the dev set.

    Returned callable matches the train_linear_probe dev_metric signature but
    ignores the pre-extracted stacks in favour of per-sentence decoding.
    """

    def metric(model: LinearProbeModel, _stacks, _labels) -> float:
        predicted = predict_tag_sequences(model, data, backend)
        return span_f1([s.labels for s in data], predicted)

    return metric
