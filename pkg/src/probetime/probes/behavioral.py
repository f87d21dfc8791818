"""Behavioral probes: the model is used as it is, zero added parameters.

Sentence scores are pseudo-log-likelihoods: mask each position in turn and
average the log probabilities of the true tokens.  Minimal-pair items are
correct only when the good sentence scores strictly higher than every bad
one; ties count as incorrect, which pins a random or uniform backend to the
adversarial floor instead of inflating its accuracy.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..backend.base import CAP_MASKED_LM, ScoringBackend
from ..core import EvalRecord
from ..errors import ContractViolation, NoData, SkipSignal
from .data import ClozeItem, MinimalPairItem, MultiChoiceItem

LOG_PROB_FLOOR = 1e-30


def _encode(tokens: Sequence[str], backend: ScoringBackend) -> list[int]:
    try:
        return backend.vocab.encode(tokens)
    except KeyError as exc:
        raise SkipSignal(f"out-of-vocabulary token {exc.args[0]!r}") from None


def _pll_requests(token_ids: list[int], mask_id: int):
    requests = []
    for i in range(len(token_ids)):
        masked = list(token_ids)
        masked[i] = mask_id
        requests.append((masked, [i]))
    return requests


def pll_score(tokens: Sequence[str], backend: ScoringBackend) -> float:
    """(1/n) * sum_i log P(w_i | sentence with position i masked)."""
    backend.require(CAP_MASKED_LM)
    if not tokens:
        raise SkipSignal("empty sentence")
    token_ids = _encode(tokens, backend)
    results = backend.score_masked_many(_pll_requests(token_ids, backend.vocab.mask_id))
    total = 0.0
    for i, dists in enumerate(results):
        prob = float(dists[0].probs[token_ids[i]])
        total += math.log(max(prob, LOG_PROB_FLOOR))
    return total / len(token_ids)


def pll_score_bruteforce(tokens: Sequence[str], backend: ScoringBackend) -> float:
    """Oracle twin of pll_score: builds and scores each masked copy through
    the single-sequence path, guarding the batched implementation."""
    backend.require(CAP_MASKED_LM)
    token_ids = _encode(tokens, backend)
    logs = []
    for i in range(len(token_ids)):
        masked = list(token_ids)
        masked[i] = backend.vocab.mask_id
        dist = backend.score_masked(masked, [i])[0]
        logs.append(math.log(max(float(dist.probs[token_ids[i]]), LOG_PROB_FLOOR)))
    return sum(logs) / len(logs)


def eval_minimal_pairs(
    items: Sequence[MinimalPairItem],
    backend: ScoringBackend,
    *,
    task_id: str = "",
    checkpoint_step: int = 0,
) -> EvalRecord:
    """Accuracy of scoring the good sentence strictly above every bad one."""
    backend.require(CAP_MASKED_LM)
    if not items:
        raise NoData("no minimal-pair items")
    correct = 0
    scored = 0
    skipped = 0
    for item in items:
        try:
            good = pll_score(item.good, backend)
            bad_scores = [pll_score(bad, backend) for bad in item.bads]
        except SkipSignal:
            skipped += 1
            continue
        scored += 1
        if all(good > bad for bad in bad_scores):
            correct += 1
    if scored == 0:
        raise NoData(f"all {skipped} minimal-pair items were skipped")
    return EvalRecord(
        task_id=task_id,
        checkpoint_step=checkpoint_step,
        metric_value=correct / scored,
        n_items=scored,
        n_skipped=skipped,
    )


def _rank_in_pool(probs: np.ndarray, pool: np.ndarray, answer_id: int) -> int:
    """1-based rank of the answer inside the pool: sort by probability
    descending with ties broken by lower token id."""
    p_ans = probs[answer_id]
    higher = int(np.sum(probs[pool] > p_ans))
    tied_earlier = int(np.sum((probs[pool] == p_ans) & (pool < answer_id)))
    return 1 + higher + tied_earlier


def eval_cloze(
    items: Sequence[ClozeItem],
    backend: ScoringBackend,
    k: int = 1,
    *,
    task_id: str = "",
    checkpoint_step: int = 0,
) -> EvalRecord:
    """Precision@k over the candidate list when present, otherwise over the
    full vocabulary minus the special tokens.

    Items whose answer or context is out of vocabulary are skipped and
    counted; candidates other than the answer that are out of vocabulary are
    dropped from the pool.
    """
    backend.require(CAP_MASKED_LM)
    if k < 1:
        raise ContractViolation(f"k must be >= 1, got {k}")
    if not items:
        raise NoData("no cloze items")
    vocab = backend.vocab
    full_pool = np.array(
        [t for t in range(vocab.size) if t not in vocab.special_ids], dtype=np.int64
    )
    correct = 0
    scored = 0
    skipped = 0
    for item in items:
        try:
            answer_id = vocab.id(item.answer)
            context = [
                vocab.mask_id if i == item.mask_index else vocab.id(t)
                for i, t in enumerate(item.tokens)
            ]
        except KeyError:
            skipped += 1
            continue
        if item.candidates is not None:
            pool = np.array(
                sorted({vocab.id(c) for c in item.candidates if c in vocab} | {answer_id}),
                dtype=np.int64,
            )
        else:
            pool = full_pool
        dist = backend.score_masked(context, [item.mask_index])[0]
        if _rank_in_pool(dist.probs, pool, answer_id) <= k:
            correct += 1
        scored += 1
    if scored == 0:
        raise NoData(f"all {skipped} cloze items were skipped")
    return EvalRecord(
        task_id=task_id,
        checkpoint_step=checkpoint_step,
        metric_value=correct / scored,
        n_items=scored,
        n_skipped=skipped,
    )


def eval_multichoice(
    items: Sequence[MultiChoiceItem],
    backend: ScoringBackend,
    *,
    task_id: str = "",
    checkpoint_step: int = 0,
) -> EvalRecord:
    """Argmax over the choices' raw (unrenormalized) probabilities at the mask
    slot; ties resolve to the lowest choice index."""
    backend.require(CAP_MASKED_LM)
    if not items:
        raise NoData("no multichoice items")
    vocab = backend.vocab
    correct = 0
    scored = 0
    skipped = 0
    for item in items:
        try:
            choice_ids = [vocab.id(c) for c in item.choices]
            context = [
                vocab.mask_id if i == item.mask_index else vocab.id(t)
                for i, t in enumerate(item.tokens)
            ]
        except KeyError:
            skipped += 1
            continue
        dist = backend.score_masked(context, [item.mask_index])[0]
        choice_probs = dist.probs[choice_ids]
        predicted = int(np.argmax(choice_probs))  # first maximum wins ties
        if predicted == item.answer_index:
            correct += 1
        scored += 1
    if scored == 0:
        raise NoData(f"all {skipped} multichoice items were skipped")
    return EvalRecord(
        task_id=task_id,
        checkpoint_step=checkpoint_step,
        metric_value=correct / scored,
        n_items=scored,
        n_skipped=skipped,
    )
