"""Self-contained toy masked LM: a pre-norm transformer encoder in numpy.

Learned positional embeddings, tied output projection, float64 throughout.
Forward and backward passes are written by hand so that training is a pure
function of (config, corpus, seed) down to the bit, checkpoints serialize to
a flat language-neutral archive, and the analytic gradients can be checked
against central finite differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigError, ContractViolation

ADAM_BETAS = (0.9, 0.98)
ADAM_EPS = 1e-6
INIT_STD = 0.02
LN_EPS = 1e-5
NEG_INF = -1e30

# Pretraining configuration used by the reference full-scale setup this toy
# model miniaturizes. Recorded for documentation; running it is out of scope.
FULL_SCALE_REFERENCE = {
    "update_steps": 1_000_000,
    "batch_size": 256,
    "max_length": 512,
    "warmup_steps": 10_000,
    "peak_lr": 0.0005,
    "lr_schedule": "polynomial_decay",
    "dropout": 0.1,
    "attention_dropout": 0.1,
    "weight_decay": 0.01,
    "adam_betas": (0.9, 0.98),
    "adam_eps": 1e-6,
    "masking": "static",
    "mask_rate": 0.15,
}


@dataclass(frozen=True)
class ToyMLMConfig:
    V: int
    d_model: int
    n_layers: int
    n_heads: int
    ffn_dim: int
    max_seq_len: int
    mask_rate: float = 0.15
    batch_size: int = 32
    total_steps: int = 5000
    warmup_steps: int = 250
    peak_lr: float = 1e-3
    seed: int = 0
    checkpoint_schedule: tuple[int, ...] = ()

    def __post_init__(self):
        for name in ("V", "d_model", "n_layers", "n_heads", "ffn_dim", "max_seq_len", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not (0.0 < self.mask_rate < 1.0):
            raise ConfigError(f"mask_rate must be in (0, 1), got {self.mask_rate}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be positive")
        if self.warmup_steps < 0 or self.warmup_steps > self.total_steps:
            raise ConfigError("warmup_steps must lie in [0, total_steps]")
        schedule = tuple(int(s) for s in self.checkpoint_schedule)
        object.__setattr__(self, "checkpoint_schedule", schedule)
        if schedule:
            if list(schedule) != sorted(set(schedule)):
                raise ConfigError("checkpoint_schedule must be sorted and duplicate-free")
            if schedule[0] != 0 or schedule[-1] != self.total_steps:
                raise ConfigError("checkpoint_schedule must contain 0 and total_steps")
            if any(s < 0 or s > self.total_steps for s in schedule):
                raise ConfigError("checkpoint_schedule step outside [0, total_steps]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checkpoint_schedule"] = list(self.checkpoint_schedule)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ToyMLMConfig":
        d = dict(d)
        d["checkpoint_schedule"] = tuple(d.get("checkpoint_schedule", ()))
        return cls(**d)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def toy_preset(V: int, seed: int, checkpoint_schedule: Sequence[int] = ()) -> ToyMLMConfig:
    """Default desk-scale preset, sized so the end-to-end run takes minutes."""
    schedule = tuple(checkpoint_schedule) or tuple(range(0, 5001, 250))
    return ToyMLMConfig(
        V=V,
        d_model=64,
        n_layers=2,
        n_heads=2,
        ffn_dim=128,
        max_seq_len=16,
        mask_rate=0.15,
        batch_size=32,
        total_steps=5000,
        warmup_steps=250,
        peak_lr=1e-3,
        seed=seed,
        checkpoint_schedule=schedule,
    )


# ---------------------------------------------------------------------------
# parameters


def parameter_names(cfg: ToyMLMConfig) -> list[str]:
    names = ["tok_emb", "pos_emb"]
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        names += [
            p + "ln1.g", p + "ln1.b",
            p + "attn.wq", p + "attn.bq",
            p + "attn.wk",
            p + "attn.wv", p + "attn.bv",
            p + "attn.wo", p + "attn.bo",
            p + "ln2.g", p + "ln2.b",
            p + "ffn.w1", p + "ffn.b1",
            p + "ffn.w2", p + "ffn.b2",
        ]
    names += ["ln_f.g", "ln_f.b", "out_bias"]
    return names


def _param_shape(name: str, cfg: ToyMLMConfig) -> tuple[int, ...]:
    d, f, v = cfg.d_model, cfg.ffn_dim, cfg.V
    leaf = name.split(".", 1)[-1] if name.startswith("layer") else name
    shapes = {
        "tok_emb": (v, d),
        "pos_emb": (cfg.max_seq_len, d),
        "ln1.g": (d,), "ln1.b": (d,),
        "attn.wq": (d, d), "attn.bq": (d,),
        # no key bias: a shared key offset shifts every attention row by a
        # constant, which the softmax cancels, leaving a dead parameter
        "attn.wk": (d, d),
        "attn.wv": (d, d), "attn.bv": (d,),
        "attn.wo": (d, d), "attn.bo": (d,),
        "ln2.g": (d,), "ln2.b": (d,),
        "ffn.w1": (d, f), "ffn.b1": (f,),
        "ffn.w2": (f, d), "ffn.b2": (d,),
        "ln_f.g": (d,), "ln_f.b": (d,),
        "out_bias": (v,),
    }
    return shapes[leaf]


def init_params(cfg: ToyMLMConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x70617261]))
    params: dict[str, np.ndarray] = {}
    for name in parameter_names(cfg):
        shape = _param_shape(name, cfg)
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            params[name] = np.ones(shape, dtype=np.float64)
        elif leaf in ("b", "bq", "bv", "bo", "b1", "b2") or name == "out_bias":
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            params[name] = rng.normal(0.0, INIT_STD, size=shape)
    return params


def zero_params(cfg: ToyMLMConfig) -> dict[str, np.ndarray]:
    """All-zero parameters (including LN gains); useful as the symmetry
    fixture where every masked distribution is exactly uniform."""
    return {
        name: np.zeros(_param_shape(name, cfg), dtype=np.float64)
        for name in parameter_names(cfg)
    }


def zeros_like_params(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.items()}


# ---------------------------------------------------------------------------
# primitives

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _gelu(x):
    """tanh-form GELU; returns (value, tanh term) so backward can reuse it."""
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    return 0.5 * x * (1.0 + t), t


def _gelu_grad(x, t):
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)


def _flat_outer(a, b):
    """Contraction over leading (batch, seq) axes: einsum('btd,bte->de')."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _layer_norm_backward(dy, cache):
    xhat, inv, g = cache
    dxhat = dy * g
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    mean_dxhat = dxhat.mean(axis=-1, keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dg, db


def _softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


# ---------------------------------------------------------------------------
# forward / backward


def forward(params, cfg: ToyMLMConfig, input_ids, attn_mask=None, collect_layers=False):
    """Run the encoder.

    input_ids: (B, T) int array; attn_mask: (B, T) bool array, True = real
    token (pad keys are excluded from attention).  Returns (logits, cache).
    When collect_layers is set the cache carries the per-layer residual
    stream for encode().
    """
    input_ids = np.asarray(input_ids, dtype=np.int64)
    if input_ids.ndim != 2:
        raise ContractViolation("input_ids must be a (batch, seq) array")
    b, t = input_ids.shape
    if t > cfg.max_seq_len:
        raise ContractViolation(f"sequence length {t} exceeds max_seq_len {cfg.max_seq_len}")
    if np.any(input_ids < 0) or np.any(input_ids >= cfg.V):
        raise IndexError("token id out of vocabulary range")
    if attn_mask is None:
        attn_mask = np.ones((b, t), dtype=bool)

    tok = params["tok_emb"][input_ids]  # (B, T, d)
    pos = params["pos_emb"][:t][None, :, :]
    h = tok + pos

    key_bias = np.where(attn_mask[:, None, None, :], 0.0, NEG_INF)  # (B,1,1,T)
    scale = 1.0 / math.sqrt(cfg.head_dim)

    cache = {
        "input_ids": input_ids,
        "attn_mask": attn_mask,
        "layers": [],
        "layer_stream": [tok.copy()] if collect_layers else None,
    }

    for i in range(cfg.n_layers):
        p = f"layer{i}."
        a, ln1_cache = _layer_norm(h, params[p + "ln1.g"], params[p + "ln1.b"])
        q = a @ params[p + "attn.wq"] + params[p + "attn.bq"]
        k = a @ params[p + "attn.wk"]
        v = a @ params[p + "attn.wv"] + params[p + "attn.bv"]
        qh, kh, vh = (_split_heads(x, cfg.n_heads) for x in (q, k, v))
        scores = qh @ kh.transpose(0, 1, 3, 2) * scale + key_bias
        attn = _softmax(scores, axis=-1)
        ctx = attn @ vh
        merged = _merge_heads(ctx)
        o = merged @ params[p + "attn.wo"] + params[p + "attn.bo"]
        h_attn = h + o

        bpre, ln2_cache = _layer_norm(h_attn, params[p + "ln2.g"], params[p + "ln2.b"])
        f1 = bpre @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        act, gelu_t = _gelu(f1)
        f2 = act @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
        h_out = h_attn + f2

        cache["layers"].append(
            {
                "a": a, "ln1": ln1_cache, "qh": qh, "kh": kh, "vh": vh,
                "attn": attn, "merged": merged, "h_attn": h_attn,
                "bpre": bpre, "ln2": ln2_cache, "f1": f1, "act": act,
                "gelu_t": gelu_t,
            }
        )
        h = h_out
        if collect_layers:
            cache["layer_stream"].append(h.copy())

    hf, lnf_cache = _layer_norm(h, params["ln_f.g"], params["ln_f.b"])
    cache["lnf"] = lnf_cache
    cache["hf"] = hf
    if collect_layers:
        # The top layer exported to probes is the post-norm stream that feeds
        # the output projection.
        cache["layer_stream"][-1] = hf.copy()
    logits = hf @ params["tok_emb"].T + params["out_bias"]
    return logits, cache


def masked_lm_loss(params, cfg, input_ids, labels, loss_mask, attn_mask=None):
    """Cross-entropy averaged over masked positions; 0 when none are masked."""
    logits, cache = forward(params, cfg, input_ids, attn_mask=attn_mask)
    loss_mask = np.asarray(loss_mask, dtype=np.float64)
    m = float(loss_mask.sum())
    if m == 0.0:
        return 0.0, logits, cache
    probs = _softmax(logits, axis=-1)
    cache["probs"] = probs
    b, t = np.asarray(input_ids).shape
    label_probs = probs[np.arange(b)[:, None], np.arange(t)[None, :], labels]
    nll = -np.log(np.maximum(label_probs, 1e-300)) * loss_mask
    return float(nll.sum() / m), logits, cache


def masked_lm_loss_and_grads(params, cfg, input_ids, labels, loss_mask, attn_mask=None):
    loss, logits, cache = masked_lm_loss(params, cfg, input_ids, labels, loss_mask, attn_mask)
    grads = zeros_like_params(params)
    loss_mask = np.asarray(loss_mask, dtype=np.float64)
    m = float(loss_mask.sum())
    if m == 0.0:
        return loss, grads

    b, t = cache["input_ids"].shape
    dlogits = cache["probs"]  # consumed destructively; loss no longer needs it
    dlogits[np.arange(b)[:, None], np.arange(t)[None, :], labels] -= 1.0
    dlogits *= (loss_mask / m)[:, :, None]

    hf = cache["hf"]
    grads["out_bias"] += dlogits.sum(axis=(0, 1))
    grads["tok_emb"] += _flat_outer(dlogits, hf)
    dh = dlogits @ params["tok_emb"]

    dh, dg, dbeta = _layer_norm_backward(dh, cache["lnf"])
    grads["ln_f.g"] += dg
    grads["ln_f.b"] += dbeta

    scale = 1.0 / math.sqrt(cfg.head_dim)
    for i in reversed(range(cfg.n_layers)):
        p = f"layer{i}."
        lc = cache["layers"][i]

        # FFN block
        dact = dh @ params[p + "ffn.w2"].T
        grads[p + "ffn.w2"] += _flat_outer(lc["act"], dh)
        grads[p + "ffn.b2"] += dh.sum(axis=(0, 1))
        df1 = dact * _gelu_grad(lc["f1"], lc["gelu_t"])
        grads[p + "ffn.w1"] += _flat_outer(lc["bpre"], df1)
        grads[p + "ffn.b1"] += df1.sum(axis=(0, 1))
        dbpre = df1 @ params[p + "ffn.w1"].T
        dh_attn, dg2, db2 = _layer_norm_backward(dbpre, lc["ln2"])
        grads[p + "ln2.g"] += dg2
        grads[p + "ln2.b"] += db2
        dh_attn = dh_attn + dh  # residual

        # attention block
        do = dh_attn
        grads[p + "attn.wo"] += _flat_outer(lc["merged"], do)
        grads[p + "attn.bo"] += do.sum(axis=(0, 1))
        dmerged = do @ params[p + "attn.wo"].T
        dctx = _split_heads(dmerged, cfg.n_heads)

        dattn = dctx @ lc["vh"].transpose(0, 1, 3, 2)
        dvh = lc["attn"].transpose(0, 1, 3, 2) @ dctx
        dscores = lc["attn"] * (dattn - (dattn * lc["attn"]).sum(axis=-1, keepdims=True))
        dqh = dscores @ lc["kh"] * scale
        dkh = dscores.transpose(0, 1, 3, 2) @ lc["qh"] * scale

        dq, dk, dv = (_merge_heads(x) for x in (dqh, dkh, dvh))
        a = lc["a"]
        da = dq @ params[p + "attn.wq"].T + dk @ params[p + "attn.wk"].T + dv @ params[p + "attn.wv"].T
        grads[p + "attn.wq"] += _flat_outer(a, dq)
        grads[p + "attn.bq"] += dq.sum(axis=(0, 1))
        grads[p + "attn.wk"] += _flat_outer(a, dk)
        grads[p + "attn.wv"] += _flat_outer(a, dv)
        grads[p + "attn.bv"] += dv.sum(axis=(0, 1))

        dh_pre, dg1, db1 = _layer_norm_backward(da, lc["ln1"])
        grads[p + "ln1.g"] += dg1
        grads[p + "ln1.b"] += db1
        dh = dh_pre + dh_attn  # residual

    grads["pos_emb"][:t] += dh.sum(axis=0)
    np.add.at(grads["tok_emb"], cache["input_ids"].reshape(-1), dh.reshape(-1, cfg.d_model))
    return loss, grads
