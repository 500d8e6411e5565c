"""Low-rank adapters over a frozen (optionally int4-quantized) base model.

An adapted linear layer computes ``x @ W + (alpha/r) * (x @ a) @ b`` where
``W`` is frozen, ``a`` is seeded-random, and ``b`` starts at zero, so
injection leaves the model function unchanged until training moves ``b``.
Weights here are stored (d_in, d_out); ``a``/``b`` are the row-convention
transposes of the usual rank decomposition, carrying the same r*(d_in+d_out)
trainable entries.

Quantization is blockwise affine int4 over a symmetric range: each block of
entries maps [-absmax, +absmax] onto codes 0..15, which bounds per-entry
round-trip error by scale/2 and reproduces constant blocks exactly.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass

import numpy as np

from .errors import AlreadyMergedError, BlockSizeInvalidError, NoTargetMatchedError
from .neural import Model, ModelConfig, PROJECTION_SUFFIXES

_HEAD_NAMES = ("head.w", "head.b")


@dataclass
class LoraAdapter:
    target: str
    a: np.ndarray        # (d_in, r), seeded small random
    b: np.ndarray        # (r, d_out), zeros at injection
    rank: int
    alpha: float

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank

    def delta(self) -> np.ndarray:
        """Materialized weight update (d_in, d_out)."""
        return self.scaling * (self.a @ self.b)


class QuantizedMatrix:
    """Blockwise symmetric-range affine int4 storage of a 2-D weight."""

    def __init__(self, shape, block_size, scales, zero_points, codes):
        self.shape = tuple(shape)
        self.block_size = block_size
        self.scales = scales
        self.zero_points = zero_points
        self.codes = codes

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @classmethod
    def quantize(cls, w: np.ndarray, block_size: int = 64) -> "QuantizedMatrix":
        if not isinstance(block_size, int) or block_size < 1:
            raise BlockSizeInvalidError(f"block_size must be a positive int, got {block_size!r}")
        flat = np.asarray(w, dtype=np.float64).reshape(-1)
        n_blocks = (flat.size + block_size - 1) // block_size
        scales = np.zeros(n_blocks)
        zeros = np.zeros(n_blocks)
        codes = np.zeros(flat.size, dtype=np.uint8)
        for bi in range(n_blocks):
            lo, hi = bi * block_size, min((bi + 1) * block_size, flat.size)
            block = flat[lo:hi]
            amax = np.abs(block).max() if block.size else 0.0
            if amax == 0.0:
                continue
            scale = 2.0 * amax / 15.0
            zero = -amax
            scales[bi] = scale
            zeros[bi] = zero
            codes[lo:hi] = np.clip(np.round((block - zero) / scale), 0, 15).astype(np.uint8)
        return cls(w.shape, block_size, scales, zeros, codes)

    def dequantize(self, dtype=np.float32) -> np.ndarray:
        out = np.empty(self.codes.size)
        bs = self.block_size
        for bi in range(self.scales.size):
            lo, hi = bi * bs, min((bi + 1) * bs, self.codes.size)
            out[lo:hi] = self.zero_points[bi] + self.scales[bi] * self.codes[lo:hi]
        return out.reshape(self.shape).astype(dtype)


@dataclass
class ParamAccount:
    """Logical parameter counts; quantized entries count at full size."""

    total: int
    trainable: int

    @property
    def percent(self) -> float:
        return self.trainable / self.total if self.total else 0.0

    def format(self) -> str:
        return f"{self.trainable:,} ({100.0 * self.percent:.2f}%)"


class AdaptedModel:
    """Frozen base + trainable adapters; the classification head stays
    trainable so the sequence-level loss can be optimized at all."""

    def __init__(self, config: ModelConfig, base: dict, adapters: dict[str, LoraAdapter],
                 rank: int, alpha: float, train_head: bool = True,
                 dtype=np.float32):
        self.config = config
        self.base = base
        self.adapters = adapters
        self.rank = rank
        self.alpha = alpha
        self.train_head = train_head
        self.dtype = dtype

    def weight(self, name: str) -> np.ndarray:
        w = self.base[name]
        if isinstance(w, QuantizedMatrix):
            return w.dequantize(self.dtype)
        return w

    def adapter(self, name: str):
        return self.adapters.get(name)

    def trainable(self, name: str) -> bool:
        return self.train_head and name in _HEAD_NAMES

    def trainable_items(self):
        items = []
        if self.train_head:
            items = [(n, self.base[n]) for n in _HEAD_NAMES]
        for target in sorted(self.adapters):
            ad = self.adapters[target]
            items.append((target + ".lora_a", ad.a))
            items.append((target + ".lora_b", ad.b))
        return items

    def all_weight_names(self):
        return list(self.base.keys())

    def astype(self, dtype) -> "AdaptedModel":
        base = {k: (v if isinstance(v, QuantizedMatrix) else v.astype(dtype))
                for k, v in self.base.items()}
        adapters = {
            t: LoraAdapter(t, ad.a.astype(dtype), ad.b.astype(dtype), ad.rank, ad.alpha)
            for t, ad in self.adapters.items()
        }
        return AdaptedModel(self.config, base, adapters, self.rank, self.alpha,
                            self.train_head, dtype=dtype)


def _match_targets(names, patterns) -> list[str]:
    """Resolve name patterns against injectable projection matrices.

    A pattern matches a weight if it equals the full dotted name, is a
    suffix component of it, or fnmatch-globs it.
    """
    injectable = [n for n in names if n.endswith(PROJECTION_SUFFIXES)]
    matched: list[str] = []
    for pattern in patterns:
        hits = [n for n in injectable
                if n == pattern or n.endswith("." + pattern)
                or fnmatch.fnmatch(n, pattern)]
        if not hits:
            raise NoTargetMatchedError(
                f"pattern {pattern!r} matched no injectable matrix "
                f"(injectable: {injectable})")
        matched.extend(h for h in hits if h not in matched)
    return matched


DEFAULT_TARGETS = ("attn.wq", "attn.wv")


def inject(model: Model, targets=DEFAULT_TARGETS, rank: int = 8,
           alpha: float = 16.0, seed: int = 0, quantize: bool = False,
           block_size: int = 64) -> AdaptedModel:
    """Freeze the base model and attach rank-``rank`` adapters to every
    matched projection. With ``quantize`` the frozen projections are stored
    int4 and dequantized on use; adapters and head stay full precision."""
    if rank < 1:
        raise ValueError("rank must be >= 1")
    names = model.all_weight_names()
    matched = _match_targets(names, targets)
    dtype = model.weight("tok_emb").dtype

    base: dict = {}
    for name in names:
        w = model.weight(name)
        if quantize and name.endswith(PROJECTION_SUFFIXES):
            base[name] = QuantizedMatrix.quantize(w, block_size)
        elif name in _HEAD_NAMES:
            base[name] = w.copy()  # trainable; do not mutate the donor model
        else:
            base[name] = w

    rng = np.random.default_rng(seed)
    adapters = {}
    for name in matched:
        d_in, d_out = model.weight(name).shape
        adapters[name] = LoraAdapter(
            target=name,
            a=rng.normal(0.0, 0.02, (d_in, rank)).astype(dtype),
            b=np.zeros((rank, d_out), dtype=dtype),
            rank=rank,
            alpha=alpha,
        )
    return AdaptedModel(model.config, base, adapters, rank, alpha, dtype=dtype)


def quantize_base(model: Model, block_size: int = 64) -> AdaptedModel:
    """Int4-quantize the projection matrices of a model, freezing everything
    except the classification head. No adapters are attached."""
    adapted = AdaptedModel(
        model.config,
        base={}, adapters={}, rank=1, alpha=1.0, dtype=model.weight("tok_emb").dtype,
    )
    for name in model.all_weight_names():
        w = model.weight(name)
        if name.endswith(PROJECTION_SUFFIXES):
            adapted.base[name] = QuantizedMatrix.quantize(w, block_size)
        elif name in _HEAD_NAMES:
            adapted.base[name] = w.copy()
        else:
            adapted.base[name] = w
    return adapted


def merge(adapted: AdaptedModel) -> Model:
    """Materialize W' = W + (alpha/r) * a @ b and drop the adapters.

    The source object is marked merged; merging twice raises
    :class:`AlreadyMergedError`.
    """
    if not adapted.adapters:
        raise AlreadyMergedError("no adapters present to merge")
    params: dict[str, np.ndarray] = {}
    for name in adapted.all_weight_names():
        w = adapted.weight(name)
        ad = adapted.adapters.get(name)
        if ad is not None:
            w = w + ad.delta().astype(w.dtype)
        params[name] = w.copy() if ad is None else w
    adapted.adapters = {}
    return Model(adapted.config, params)


def account(model) -> ParamAccount:
    """Exact logical parameter counts for a plain or adapted model."""
    total = 0
    for name in model.all_weight_names():
        w = model.base[name] if isinstance(model, AdaptedModel) else model.weight(name)
        total += w.size
    trainable = 0
    seen = set()
    for key, arr in model.trainable_items():
        if key not in seen:
            seen.add(key)
            trainable += arr.size
    if isinstance(model, AdaptedModel):
        for ad in model.adapters.values():
            total += ad.a.size + ad.b.size
    return ParamAccount(total=int(total), trainable=int(trainable))
