"""Checkpointing pretraining loop for the toy masked LM.

Masking is static: each example's corruption pattern is fixed at epoch
preprocessing time as a pure function of (seed, epoch, example index), with
the usual 80/10/10 replacement of the selected positions.  Training is a
pure function of (config, corpus, seed); restarting from any saved
checkpoint reproduces the uninterrupted run bit for bit because the Adam
moments are stored alongside the weights and the data order is recomputed
rather than carried in RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..core import CheckpointRef
from ..errors import ConfigError, NoData
from .checkpoint import checkpoint_dir, list_checkpoint_steps, load_checkpoint, save_checkpoint
from .model import (
    ADAM_BETAS,
    ADAM_EPS,
    ToyMLMConfig,
    init_params,
    masked_lm_loss,
    masked_lm_loss_and_grads,
    zeros_like_params,
)
from .vocab import Vocabulary

HELDOUT_FRACTION = 0.1

# Internal stream labels for seeding independent RNG purposes.
_STREAM_MASK = 0x6d61736b
_STREAM_PERM = 0x7065726d
_STREAM_HELDOUT = 0x68656c64


def default_checkpoint_schedule(total_steps: int) -> tuple[int, ...]:
    """Dense-early / sparse-late schedule.

    Geometric doubling through the first ~1.3% of training, then uniform
    spacing of total_steps/50, always including 0 and the final step.  At the
    million-step scale this yields about 60 checkpoints with a 20k-spaced
    tail.
    """
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    steps = {0, total_steps}
    early_end = max(1, round(total_steps * 0.0128))
    s = max(1, round(total_steps * 1e-4))
    while s <= early_end:
        steps.add(s)
        s *= 2
    steps.add(early_end)
    tail_spacing = max(1, total_steps // 50)
    steps.update(range(tail_spacing, total_steps + 1, tail_spacing))
    return tuple(sorted(x for x in steps if 0 <= x <= total_steps))


def load_corpus(path) -> list[list[str]]:
    """UTF-8 text, one whitespace-tokenized sentence per line."""
    sentences = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        tokens = line.split()
        if tokens:
            sentences.append(tokens)
    return sentences


def encode_corpus(sentences: Sequence[Sequence[str]], vocab: Vocabulary, max_seq_len: int):
    """Pack sentences into a fixed-width id matrix plus a real-token mask."""
    if not sentences:
        raise NoData("corpus is empty")
    width = min(max(len(s) for s in sentences), max_seq_len)
    ids = np.full((len(sentences), width), vocab.pad_id, dtype=np.int64)
    real = np.zeros((len(sentences), width), dtype=bool)
    for i, sent in enumerate(sentences):
        enc = vocab.encode(sent)[:width]
        ids[i, : len(enc)] = enc
        real[i, : len(enc)] = True
    return ids, real


def _mask_epoch(ids, real, vocab: Vocabulary, cfg: ToyMLMConfig, epoch: int):
    """Static mask pattern for one epoch: inputs, labels, loss mask."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_MASK, epoch]))
    u_select = rng.random(ids.shape)
    u_action = rng.random(ids.shape)
    # Draw replacement tokens for every cell up front so consumption is
    # shape-stable regardless of which cells end up selected.
    non_special = np.array(
        [t for t in range(vocab.size) if t not in vocab.special_ids], dtype=np.int64
    )
    replacements = non_special[rng.integers(0, len(non_special), size=ids.shape)]

    selected = (u_select < cfg.mask_rate) & real
    inputs = ids.copy()
    inputs[selected & (u_action < 0.8)] = vocab.mask_id
    random_slot = selected & (u_action >= 0.8) & (u_action < 0.9)
    inputs[random_slot] = replacements[random_slot]
    # remaining 10%: keep the original token
    return inputs, ids, selected.astype(np.float64)


def _epoch_permutation(n: int, cfg: ToyMLMConfig, epoch: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_PERM, epoch]))
    return rng.permutation(n)


def _lr_at(step: int, cfg: ToyMLMConfig) -> float:
    """Linear warmup to peak, then linear (power-1 polynomial) decay to zero."""
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    remaining = cfg.total_steps - step
    denom = max(1, cfg.total_steps - cfg.warmup_steps)
    return cfg.peak_lr * remaining / denom


class AdamState:
    def __init__(self, params):
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)

    def update(self, params, grads, lr: float, t: int) -> None:
        b1, b2 = ADAM_BETAS
        corr1 = 1.0 - b1**t
        corr2 = 1.0 - b2**t
        for name, g in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= lr * (m / corr1) / (np.sqrt(v / corr2) + ADAM_EPS)

    def as_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name, arr in self.m.items():
            out[f"opt.m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"opt.v.{name}"] = arr
        return out

    @classmethod
    def from_tensors(cls, params, tensors) -> "AdamState":
        state = cls(params)
        for name in params:
            state.m[name] = tensors[f"opt.m.{name}"].copy()
            state.v[name] = tensors[f"opt.v.{name}"].copy()
        return state


@dataclass
class LossPoint:
    step: int
    train_loss: float | None
    heldout_loss: float | None


def heldout_batch(ids, real, vocab, cfg):
    """Fixed, epoch-independent mask pattern for the held-out split."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _STREAM_HELDOUT]))
    u_select = rng.random(ids.shape)
    selected = (u_select < cfg.mask_rate) & real
    # Guarantee at least one supervised position so the held-out loss exists.
    if not selected.any():
        first_real = np.argwhere(real)
        selected[tuple(first_real[0])] = True
    inputs = ids.copy()
    inputs[selected] = vocab.mask_id
    return inputs, ids, selected.astype(np.float64), real


def pretrain_toy(
    cfg: ToyMLMConfig,
    corpus: Sequence[Sequence[str]],
    vocab: Vocabulary,
    out_root,
    run_tag: str,
    resume: bool = False,
    log_every: int | None = None,
    progress: Callable[[int, float], None] | None = None,
) -> tuple[list[CheckpointRef], list[LossPoint]]:
    """Train from scratch, saving one checkpoint per schedule entry.

    Returns the checkpoint references and the loss curve (train loss at
    logging steps, held-out masked-token loss at schedule steps).
    """
    corpus = list(corpus)
    if not corpus:
        raise NoData("corpus is empty")
    schedule = cfg.checkpoint_schedule or default_checkpoint_schedule(cfg.total_steps)
    if schedule[-1] > cfg.total_steps:
        raise ConfigError("checkpoint schedule extends past total_steps")
    schedule_set = set(schedule)

    ids, real = encode_corpus(corpus, vocab, cfg.max_seq_len)
    n_heldout = max(1, round(len(corpus) * HELDOUT_FRACTION))
    if len(corpus) - n_heldout < cfg.batch_size:
        raise ConfigError(
            f"corpus too small: {len(corpus)} sentences leave fewer than one "
            f"batch of {cfg.batch_size} after the held-out split"
        )
    train_ids, train_real = ids[:-n_heldout], real[:-n_heldout]
    held = heldout_batch(ids[-n_heldout:], real[-n_heldout:], vocab, cfg)

    n_train = len(train_ids)
    steps_per_epoch = n_train // cfg.batch_size
    if log_every is None:
        log_every = max(1, cfg.total_steps // 50)

    def heldout_loss(params) -> float:
        inputs, labels, loss_mask, attn = held
        loss, _, _ = masked_lm_loss(params, cfg, inputs, labels, loss_mask, attn_mask=attn)
        return loss

    out_root = Path(out_root)
    refs: list[CheckpointRef] = []
    losses: list[LossPoint] = []

    start_step = 0
    params = init_params(cfg)
    adam = AdamState(params)

    if resume:
        existing = list_checkpoint_steps(out_root / run_tag)
        resumable = [s for s in existing if s in schedule_set]
        if resumable:
            start_step = max(resumable)
            loaded, extra, loaded_cfg, _, _ = load_checkpoint(
                checkpoint_dir(out_root, run_tag, start_step)
            )
            if loaded_cfg != cfg:
                raise ConfigError("cannot resume: saved config differs from requested config")
            params = loaded
            adam = AdamState.from_tensors(params, extra)

    def save(step: int) -> None:
        path = save_checkpoint(
            checkpoint_dir(out_root, run_tag, step), params, cfg, step, run_tag,
            extra_tensors=adam.as_tensors(),
        )
        refs.append(CheckpointRef(step=step, locator=str(path), run_tag=run_tag, seed=cfg.seed))

    if start_step == 0:
        if 0 in schedule_set:
            save(0)
            losses.append(LossPoint(step=0, train_loss=None, heldout_loss=heldout_loss(params)))
    else:
        for s in sorted(s for s in schedule if s <= start_step):
            path = checkpoint_dir(out_root, run_tag, s)
            refs.append(CheckpointRef(step=s, locator=str(path), run_tag=run_tag, seed=cfg.seed))

    epoch_cache: dict[int, tuple] = {}

    def epoch_data(epoch: int):
        if epoch not in epoch_cache:
            epoch_cache.clear()
            inputs, labels, loss_mask = _mask_epoch(train_ids, train_real, vocab, cfg, epoch)
            perm = _epoch_permutation(n_train, cfg, epoch)
            epoch_cache[epoch] = (inputs, labels, loss_mask, perm)
        return epoch_cache[epoch]

    for step in range(start_step + 1, cfg.total_steps + 1):
        epoch = (step - 1) // steps_per_epoch
        offset = ((step - 1) % steps_per_epoch) * cfg.batch_size
        inputs, labels, loss_mask, perm = epoch_data(epoch)
        batch_idx = perm[offset : offset + cfg.batch_size]
        loss, grads = masked_lm_loss_and_grads(
            params, cfg,
            inputs[batch_idx], labels[batch_idx], loss_mask[batch_idx],
            attn_mask=train_real[batch_idx],
        )
        adam.update(params, grads, _lr_at(step, cfg), step)

        on_schedule = step in schedule_set
        if on_schedule:
            save(step)
        if on_schedule or step % log_every == 0:
            losses.append(
                LossPoint(
                    step=step,
                    train_loss=loss,
                    heldout_loss=heldout_loss(params) if on_schedule else None,
                )
            )
        if progress is not None:
            progress(step, loss)

    refs.sort(key=lambda r: r.step)
    return refs, losses


def write_loss_csv(path, losses: Iterable[LossPoint]) -> None:
    lines = ["step,train_loss,heldout_loss"]
    for point in losses:
        train = "" if point.train_loss is None else format(point.train_loss, ".17g")
        held = "" if point.heldout_loss is None else format(point.heldout_loss, ".17g")
        lines.append(f"{point.step},{train},{held}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _gradcheck_point(cfg: ToyMLMConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Random O(1)-scale parameter point for the derivative check.

    The training-time init (std 0.02) leaves some attention-weight gradients
    below the ~1e-11 noise floor of double-precision central differences, so
    the check evaluates at a better-conditioned point instead.
    """
    from .model import _param_shape, parameter_names

    params: dict[str, np.ndarray] = {}
    for name in parameter_names(cfg):
        shape = _param_shape(name, cfg)
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            params[name] = 1.0 + 0.2 * rng.normal(size=shape)
        elif leaf in ("b", "bq", "bv", "bo", "b1", "b2") or name == "out_bias":
            params[name] = 0.2 * rng.normal(size=shape)
        else:
            params[name] = 0.4 * rng.normal(size=shape)
    return params


def gradient_check(
    cfg: ToyMLMConfig,
    batch: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    h: float = 1e-5,
    samples_per_param: int = 4,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    batch = (input_ids, labels, loss_mask, attn_mask).  Coordinates are
    sampled per parameter tensor; relative error uses |analytic| + 1e-8 in
    the denominator.
    """
    input_ids, labels, loss_mask, attn_mask = batch
    rng = np.random.default_rng(seed)
    params = _gradcheck_point(cfg, rng)
    _, grads = masked_lm_loss_and_grads(params, cfg, input_ids, labels, loss_mask, attn_mask)

    def loss_at() -> float:
        loss, _, _ = masked_lm_loss(params, cfg, input_ids, labels, loss_mask, attn_mask)
        return loss

    worst = 0.0
    for name in sorted(params):
        flat = params[name].reshape(-1)
        gflat = grads[name].reshape(-1)
        k = min(samples_per_param, flat.size)
        coords = rng.choice(flat.size, size=k, replace=False)
        for c in coords:
            original = flat[c]
            flat[c] = original + h
            plus = loss_at()
            flat[c] = original - h
            minus = loss_at()
            flat[c] = original
            numeric = (plus - minus) / (2.0 * h)
            analytic = gflat[c]
            err = abs(analytic - numeric) / (abs(analytic) + 1e-8)
            worst = max(worst, err)
    return worst
