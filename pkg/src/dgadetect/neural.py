"""Character-level transformer classifier with hand-written backprop.

Pre-layer-norm encoder blocks, CLS-position classification head, optional
next-token head (causal attention) for the generative loss. Forward,
losses, and the exact analytic backward pass are plain numpy; gradient
correctness is checked against central finite differences in
:func:`grad_check`.

The forward pass trims each batch to its longest true length, so model
outputs are independent -- bit for bit -- of how much padding the encoder
appended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    LabelOutOfRangeError,
    SequenceTooShortError,
    ShapeMismatchError,
)
from .tokenizer import DEFAULT_MAX_LEN, TokenSequence, batch_arrays

LN_EPS = 1e-5
INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 42
    max_len: int = DEFAULT_MAX_LEN
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 256
    n_classes: int = 2
    dropout: float = 0.1
    ntp_head: str = "untied"  # "none" | "untied" | "tied"
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.ntp_head not in ("none", "untied", "tied"):
            raise ValueError(f"unknown ntp_head {self.ntp_head!r}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "max_len": self.max_len,
            "d_model": self.d_model, "n_heads": self.n_heads,
            "n_layers": self.n_layers, "d_ff": self.d_ff,
            "n_classes": self.n_classes, "dropout": self.dropout,
            "ntp_head": self.ntp_head, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# Matrices eligible for adapter injection / quantization (2-D projections).
PROJECTION_SUFFIXES = ("attn.wq", "attn.wk", "attn.wv", "attn.wo",
                       "ff.w1", "ff.w2")


def init_params(config: ModelConfig, dtype=np.float32) -> dict[str, np.ndarray]:
    """Seeded parameter dict. Weights are (d_in, d_out) so every linear op
    is ``x @ W``."""
    rng = np.random.default_rng(config.seed)
    d, v = config.d_model, config.vocab_size

    def normal(*shape):
        return rng.normal(0.0, INIT_STD, shape).astype(dtype)

    p: dict[str, np.ndarray] = {
        "tok_emb": normal(v, d),
        "pos_emb": normal(config.max_len, d),
    }
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        p[pre + "ln1.g"] = np.ones(d, dtype)
        p[pre + "ln1.b"] = np.zeros(d, dtype)
        for name in ("attn.wq", "attn.wk", "attn.wv", "attn.wo"):
            p[pre + name] = normal(d, d)
        p[pre + "ln2.g"] = np.ones(d, dtype)
        p[pre + "ln2.b"] = np.zeros(d, dtype)
        p[pre + "ff.w1"] = normal(d, config.d_ff)
        p[pre + "ff.b1"] = np.zeros(config.d_ff, dtype)
        p[pre + "ff.w2"] = normal(config.d_ff, d)
        p[pre + "ff.b2"] = np.zeros(d, dtype)
    p["ln_f.g"] = np.ones(d, dtype)
    p["ln_f.b"] = np.zeros(d, dtype)
    p["head.w"] = normal(d, config.n_classes)
    p["head.b"] = np.zeros(config.n_classes, dtype)
    if config.ntp_head == "untied":
        p["ntp.w"] = normal(d, v)
    return p


class Model:
    """Fully trainable transformer: parameters plus config.

    The training and adapter machinery only relies on the accessor methods
    below, which :class:`~dgadetect.lora.AdaptedModel` mirrors.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 dtype=np.float32):
        self.config = config
        self.params = params if params is not None else init_params(config, dtype)

    def weight(self, name: str) -> np.ndarray:
        return self.params[name]

    def adapter(self, name: str):
        return None

    def trainable(self, name: str) -> bool:
        return True

    def trainable_items(self):
        return list(self.params.items())

    def all_weight_names(self):
        return list(self.params.keys())

    def astype(self, dtype) -> "Model":
        return Model(self.config,
                     {k: v.astype(dtype) for k, v in self.params.items()})


@dataclass
class ProbabilityOutput:
    """Per-item class distribution, plus per-position next-token
    distributions when the generative head ran."""

    class_probs: np.ndarray                    # (B, n_classes)
    next_token_probs: np.ndarray | None = None  # (B, T, vocab)
    mask: np.ndarray | None = None             # (B, T) validity of positions


# --- primitive forward/backward pairs ---

def _ln_fwd(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xn = xc * inv
    return xn * g + b, (xn, inv, g)


def _ln_bwd(dy, cache):
    xn, inv, g = cache
    lead = tuple(range(dy.ndim - 1))
    dg = (dy * xn).sum(axis=lead)
    db = dy.sum(axis=lead)
    dxn = dy * g
    dx = inv * (dxn - dxn.mean(-1, keepdims=True)
                - xn * (dxn * xn).mean(-1, keepdims=True))
    return dx, dg, db


def _lin_fwd(model, name, x, cache):
    shape = x.shape
    x2 = x.reshape(-1, shape[-1])
    w = model.weight(name)
    y = x2 @ w
    ad = model.adapter(name)
    u = None
    if ad is not None:
        u = x2 @ ad.a
        y = y + ad.scaling * (u @ ad.b)
    cache[name] = (x2, u)
    return y.reshape(*shape[:-1], w.shape[1])


def _lin_bwd(model, name, dy, cache, grads):
    x2, u = cache[name]
    dy2 = dy.reshape(-1, dy.shape[-1])
    w = model.weight(name)
    dx2 = dy2 @ w.T
    ad = model.adapter(name)
    if ad is not None:
        _acc(grads, name + ".lora_b", ad.scaling * (u.T @ dy2))
        du = ad.scaling * (dy2 @ ad.b.T)
        _acc(grads, name + ".lora_a", x2.T @ du)
        dx2 = dx2 + du @ ad.a.T
    if model.trainable(name):
        _acc(grads, name, x2.T @ dy2)
    return dx2.reshape(*dy.shape[:-1], w.shape[0])


def _acc(grads, key, value):
    if key in grads:
        grads[key] += value
    else:
        grads[key] = value


def _softmax(z):
    m = z.max(-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(-1, keepdims=True)


def _log_softmax(z):
    m = z.max(-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(-1, keepdims=True))


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, k = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * k)


def _drop_fwd(x, key, rate, rng, cache):
    if rng is None or rate <= 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    m = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    cache["drop"][key] = m
    return x * m


def _drop_bwd(dy, key, cache):
    m = cache["drop"].get(key)
    return dy if m is None else dy * m


# --- full passes ---

def _forward_cache(model, ids, mask, *, causal=False, want_ntp=False,
                   dropout_rng=None):
    cfg = model.config
    b, t = ids.shape
    if t > cfg.max_len:
        raise ShapeMismatchError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    tok = model.weight("tok_emb")
    dtype = tok.dtype
    cache: dict = {"ids": ids, "mask": mask, "lin": {}, "drop": {}, "layers": []}

    x = tok[ids] + model.weight("pos_emb")[:t]
    x = _drop_fwd(x, "emb", cfg.dropout, dropout_rng, cache)

    bias = np.where(mask[:, None, None, :], dtype.type(0.0), dtype.type(-np.inf))
    if causal:
        tri = np.triu(np.full((t, t), -np.inf, dtype=dtype), k=1)
        bias = bias + tri[None, None, :, :]
    scale = dtype.type(1.0 / math.sqrt(cfg.head_dim))

    lin = cache["lin"]
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        h1, ln1c = _ln_fwd(x, model.weight(pre + "ln1.g"), model.weight(pre + "ln1.b"))
        q = _split_heads(_lin_fwd(model, pre + "attn.wq", h1, lin), cfg.n_heads)
        k = _split_heads(_lin_fwd(model, pre + "attn.wk", h1, lin), cfg.n_heads)
        v = _split_heads(_lin_fwd(model, pre + "attn.wv", h1, lin), cfg.n_heads)
        scores = q @ k.transpose(0, 1, 3, 2) * scale + bias
        attn = _softmax(scores)
        ctx = _merge_heads(attn @ v)
        ao = _lin_fwd(model, pre + "attn.wo", ctx, lin)
        ao = _drop_fwd(ao, f"attn{i}", cfg.dropout, dropout_rng, cache)
        x = x + ao
        h2, ln2c = _ln_fwd(x, model.weight(pre + "ln2.g"), model.weight(pre + "ln2.b"))
        z1 = _lin_fwd(model, pre + "ff.w1", h2, lin) + model.weight(pre + "ff.b1")
        a1 = np.maximum(z1, 0)
        z2 = _lin_fwd(model, pre + "ff.w2", a1, lin) + model.weight(pre + "ff.b2")
        z2 = _drop_fwd(z2, f"ff{i}", cfg.dropout, dropout_rng, cache)
        x = x + z2
        cache["layers"].append({"ln1": ln1c, "ln2": ln2c, "attn": attn,
                                "q": q, "k": k, "v": v, "relu": z1 > 0})

    hf, lnfc = _ln_fwd(x, model.weight("ln_f.g"), model.weight("ln_f.b"))
    cache["ln_f"] = lnfc
    cache["hf"] = hf
    cache["scale"] = scale
    cls_logits = hf[:, 0, :] @ model.weight("head.w") + model.weight("head.b")

    ntp_logits = None
    if want_ntp:
        if cfg.ntp_head == "none":
            raise ShapeMismatchError("model has no next-token head")
        w_ntp = tok.T if cfg.ntp_head == "tied" else model.weight("ntp.w")
        ntp_logits = hf @ w_ntp
    return cls_logits, ntp_logits, cache


def forward(model, batch: list[TokenSequence], *, want_ntp: bool = False,
            dropout_rng=None) -> ProbabilityOutput:
    """Class probabilities for a batch; next-token distributions too when
    ``want_ntp`` (that pass uses causal attention). Deterministic when
    ``dropout_rng`` is None."""
    if not batch:
        raise ShapeMismatchError("empty batch")
    ids, mask = batch_arrays(batch)
    cls_logits, ntp_logits, _ = _forward_cache(
        model, ids, mask, causal=want_ntp, want_ntp=want_ntp,
        dropout_rng=dropout_rng)
    return ProbabilityOutput(
        class_probs=_softmax(cls_logits),
        next_token_probs=None if ntp_logits is None else _softmax(ntp_logits),
        mask=mask,
    )


def _check_labels(labels, n_classes, n_items):
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (n_items,):
        raise ShapeMismatchError(f"labels shape {y.shape} != ({n_items},)")
    if y.min(initial=0) < 0 or y.max(initial=0) >= n_classes:
        raise LabelOutOfRangeError(f"labels outside [0, {n_classes})")
    return y


def loss_class(model, batch, labels) -> float:
    """Mean over the batch of -log P(correct class). The generative head
    never contributes."""
    if not batch:
        raise ShapeMismatchError("empty batch")
    ids, mask = batch_arrays(batch)
    y = _check_labels(labels, model.config.n_classes, len(batch))
    cls_logits, _, _ = _forward_cache(model, ids, mask)
    logp = _log_softmax(cls_logits)
    return float(-logp[np.arange(len(batch)), y].astype(np.float64).mean())


def _ntp_targets(ids, mask, batch):
    for seq in batch:
        if seq.true_length < 2:
            raise SequenceTooShortError(
                "next-token loss needs at least 2 true tokens")
    targets = ids[:, 1:]
    valid = mask[:, 1:]
    return targets, valid


def loss_ntp(model, batch) -> float:
    """Mean over the batch of the summed next-token negative log-likelihood
    (positions 1..N-1; PAD excluded). Attention is causal for this loss."""
    if not batch:
        raise ShapeMismatchError("empty batch")
    ids, mask = batch_arrays(batch)
    targets, valid = _ntp_targets(ids, mask, batch)
    _, ntp_logits, _ = _forward_cache(model, ids, mask, causal=True, want_ntp=True)
    logp = _log_softmax(ntp_logits[:, :-1, :])
    b, tm1 = targets.shape
    picked = logp[np.arange(b)[:, None], np.arange(tm1)[None, :], targets]
    per_seq = -(picked * valid).astype(np.float64).sum(axis=1)
    return float(per_seq.mean())


def backward(model, batch, labels=None, *, loss: str = "class",
             dropout_rng=None) -> tuple[float, dict]:
    """Loss value and exact gradients for every trainable parameter.

    Frozen parameters get no entry; trainable parameters untouched by the
    selected loss get zeros so optimizers can iterate uniformly.
    """
    if not batch:
        raise ShapeMismatchError("empty batch")
    if loss not in ("class", "ntp"):
        raise ValueError(f"loss must be 'class' or 'ntp', got {loss!r}")
    cfg = model.config
    ids, mask = batch_arrays(batch)
    b, t = ids.shape
    want_ntp = loss == "ntp"
    if want_ntp:
        targets, valid = _ntp_targets(ids, mask, batch)
    cls_logits, ntp_logits, cache = _forward_cache(
        model, ids, mask, causal=want_ntp, want_ntp=want_ntp,
        dropout_rng=dropout_rng)

    grads: dict[str, np.ndarray] = {}
    hf = cache["hf"]
    dtype = hf.dtype
    dhf = np.zeros_like(hf)

    if loss == "class":
        y = _check_labels(labels, cfg.n_classes, b)
        logp = _log_softmax(cls_logits)
        value = float(-logp[np.arange(b), y].astype(np.float64).mean())
        dlogits = _softmax(cls_logits)
        dlogits[np.arange(b), y] -= 1.0
        dlogits /= dtype.type(b)
        if model.trainable("head.w"):
            _acc(grads, "head.w", hf[:, 0, :].T @ dlogits)
            _acc(grads, "head.b", dlogits.sum(0))
        dhf[:, 0, :] = dlogits @ model.weight("head.w").T
    else:
        logits = ntp_logits[:, :-1, :]
        logp = _log_softmax(logits)
        tm1 = t - 1
        picked = logp[np.arange(b)[:, None], np.arange(tm1)[None, :], targets]
        value = float(-(picked * valid).astype(np.float64).sum(axis=1).mean())
        dlogits = _softmax(logits)
        dlogits[np.arange(b)[:, None], np.arange(tm1)[None, :], targets] -= 1.0
        dlogits *= valid[:, :, None].astype(dtype) / dtype.type(b)
        full = np.zeros_like(ntp_logits)
        full[:, :-1, :] = dlogits
        d2 = full.reshape(-1, cfg.vocab_size)
        hf2 = hf.reshape(-1, cfg.d_model)
        if cfg.ntp_head == "tied":
            if model.trainable("tok_emb"):
                _acc(grads, "tok_emb", d2.T @ hf2)
            dhf += full @ model.weight("tok_emb")
        else:
            if model.trainable("ntp.w"):
                _acc(grads, "ntp.w", hf2.T @ d2)
            dhf += full @ model.weight("ntp.w").T

    dx, dg, db = _ln_bwd(dhf, cache["ln_f"])
    if model.trainable("ln_f.g"):
        _acc(grads, "ln_f.g", dg)
        _acc(grads, "ln_f.b", db)

    lin = cache["lin"]
    scale = cache["scale"]
    for i in reversed(range(cfg.n_layers)):
        pre = f"layers.{i}."
        lc = cache["layers"][i]
        # feed-forward block
        dz2 = _drop_bwd(dx, f"ff{i}", cache)
        if model.trainable(pre + "ff.b2"):
            _acc(grads, pre + "ff.b2", dz2.sum((0, 1)))
        da1 = _lin_bwd(model, pre + "ff.w2", dz2, lin, grads)
        dz1 = da1 * lc["relu"]
        if model.trainable(pre + "ff.b1"):
            _acc(grads, pre + "ff.b1", dz1.sum((0, 1)))
        dh2 = _lin_bwd(model, pre + "ff.w1", dz1, lin, grads)
        dres, dg, db = _ln_bwd(dh2, lc["ln2"])
        if model.trainable(pre + "ln2.g"):
            _acc(grads, pre + "ln2.g", dg)
            _acc(grads, pre + "ln2.b", db)
        dx = dx + dres
        # attention block
        dao = _drop_bwd(dx, f"attn{i}", cache)
        dctx = _lin_bwd(model, pre + "attn.wo", dao, lin, grads)
        dctxh = _split_heads(dctx, cfg.n_heads)
        attn, q, k, v = lc["attn"], lc["q"], lc["k"], lc["v"]
        dattn = dctxh @ v.transpose(0, 1, 3, 2)
        dv = attn.transpose(0, 1, 3, 2) @ dctxh
        dscores = attn * (dattn - (dattn * attn).sum(-1, keepdims=True))
        dq = (dscores @ k) * scale
        dk = (dscores.transpose(0, 1, 3, 2) @ q) * scale
        dh1 = _lin_bwd(model, pre + "attn.wq", _merge_heads(dq), lin, grads)
        dh1 += _lin_bwd(model, pre + "attn.wk", _merge_heads(dk), lin, grads)
        dh1 += _lin_bwd(model, pre + "attn.wv", _merge_heads(dv), lin, grads)
        dres, dg, db = _ln_bwd(dh1, lc["ln1"])
        if model.trainable(pre + "ln1.g"):
            _acc(grads, pre + "ln1.g", dg)
            _acc(grads, pre + "ln1.b", db)
        dx = dx + dres

    dx = _drop_bwd(dx, "emb", cache)
    if model.trainable("tok_emb"):
        dtok = grads.get("tok_emb")
        if dtok is None:
            dtok = np.zeros_like(model.weight("tok_emb"))
            grads["tok_emb"] = dtok
        np.add.at(dtok, ids, dx)
    if model.trainable("pos_emb"):
        dpos = np.zeros_like(model.weight("pos_emb"))
        dpos[:t] = dx.sum(0)
        _acc(grads, "pos_emb", dpos)

    # zero-fill trainable parameters the loss never touched
    for key, arr in model.trainable_items():
        if key not in grads:
            grads[key] = np.zeros_like(arr)
    return value, grads


def grad_check(model, batch, labels=None, *, loss: str = "class",
               h: float = 1e-5, sample_fraction: float = 0.01,
               min_samples: int = 25, seed: int = 0) -> float:
    """Max relative error between analytic gradients and central finite
    differences on a random parameter sample, all in double precision.

    The relative-error denominator is floored at 1e-4, which treats
    absolute disagreements below ~1e-8 (the double-precision FD noise
    scale at this h) as noise rather than error.
    """
    model64 = model.astype(np.float64)
    loss_fn = (lambda: loss_class(model64, batch, labels)) if loss == "class" \
        else (lambda: loss_ntp(model64, batch))
    _, grads = backward(model64, batch, labels, loss=loss)

    entries = []
    for key, arr in model64.trainable_items():
        entries.extend((key, i) for i in range(arr.size))
    rng = np.random.default_rng(seed)
    n = min(len(entries), max(min_samples, int(math.ceil(sample_fraction * len(entries)))))
    picks = rng.choice(len(entries), size=n, replace=False)

    worst = 0.0
    by_key = dict(model64.trainable_items())
    for p in picks:
        key, flat = entries[int(p)]
        arr = by_key[key].reshape(-1)
        orig = arr[flat]
        arr[flat] = orig + h
        f_plus = loss_fn()
        arr[flat] = orig - h
        f_minus = loss_fn()
        arr[flat] = orig
        fd = (f_plus - f_minus) / (2.0 * h)
        g = float(grads[key].reshape(-1)[flat])
        rel = abs(fd - g) / max(abs(fd), abs(g), 1e-4)
        worst = max(worst, rel)
    return worst
