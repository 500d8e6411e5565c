"""Versioned checkpoint container: JSON-described named tensors.

Layout: 8-byte magic ``DGADCKP1``, 8-byte little-endian header length, the
UTF-8 JSON header, then raw tensor bytes in header order. Tensors are
little-endian IEEE-754 (or integer codes for quantized blocks); the header
carries the model config, vocabulary, and every tensor's name/shape/dtype.
"""

from __future__ import annotations

import hashlib
import io
import json

import numpy as np

from .errors import CheckpointIncompatibleError
from .lora import AdaptedModel, LoraAdapter, QuantizedMatrix
from .neural import Model, ModelConfig
from .tokenizer import Vocabulary

MAGIC = b"DGADCKP1"
FORMAT_VERSION = 1

_DTYPES = {"f4": "<f4", "f8": "<f8", "u1": "|u1", "i8": "<i8"}


def _dtype_tag(arr: np.ndarray) -> str:
    kind = arr.dtype.kind + str(arr.dtype.itemsize)
    if kind not in _DTYPES:
        raise ValueError(f"unsupported tensor dtype {arr.dtype}")
    return kind


def _collect_tensors(model) -> tuple[dict, dict]:
    tensors: dict[str, np.ndarray] = {}
    quant_meta: dict[str, dict] = {}
    if isinstance(model, AdaptedModel):
        for name, w in model.base.items():
            if isinstance(w, QuantizedMatrix):
                tensors[name + ".codes"] = w.codes
                tensors[name + ".scales"] = w.scales
                tensors[name + ".zero_points"] = w.zero_points
                quant_meta[name] = {"shape": list(w.shape),
                                    "block_size": w.block_size}
            else:
                tensors[name] = w
        for target, ad in model.adapters.items():
            tensors[target + ".lora_a"] = ad.a
            tensors[target + ".lora_b"] = ad.b
        meta = {"kind": "adapted", "rank": model.rank, "alpha": model.alpha,
                "train_head": model.train_head,
                "adapter_targets": sorted(model.adapters),
                "quantized": quant_meta}
    else:
        tensors = dict(model.params)
        meta = {"kind": "plain"}
    return tensors, meta


def save_checkpoint(path, model, vocab: Vocabulary, extra: dict | None = None) -> str:
    """Write a checkpoint; returns the content hash recorded inside it."""
    tensors, meta = _collect_tensors(model)
    order = sorted(tensors)
    blob = io.BytesIO()
    entries = []
    for name in order:
        arr = np.ascontiguousarray(tensors[name])
        tag = _dtype_tag(arr)
        data = arr.astype(_DTYPES[tag]).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": tag,
                        "nbytes": len(data)})
        blob.write(data)
    payload = blob.getvalue()
    content_hash = hashlib.sha256(payload).hexdigest()
    header = {
        "format_version": FORMAT_VERSION,
        "model": meta,
        "config": model.config.to_dict(),
        "vocabulary": json.loads(vocab.to_json()),
        "tensors": entries,
        "content_hash": content_hash,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(payload)
    return content_hash


def load_checkpoint(path):
    """Read a checkpoint back into (model, vocab, extra)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointIncompatibleError(f"bad magic {magic!r} in {path}")
        header_len = int.from_bytes(fh.read(8), "little")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointIncompatibleError(f"corrupt header: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointIncompatibleError(
                f"format version {header.get('format_version')} unsupported")
        tensors: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            data = fh.read(entry["nbytes"])
            arr = np.frombuffer(data, dtype=_DTYPES[entry["dtype"]])
            tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()

    config = ModelConfig.from_dict(header["config"])
    try:
        vocab = Vocabulary.from_json(json.dumps(header["vocabulary"]))
    except (ValueError, KeyError) as exc:
        raise CheckpointIncompatibleError(f"bad vocabulary: {exc}") from exc
    if vocab.size != config.vocab_size:
        raise CheckpointIncompatibleError(
            f"vocabulary size {vocab.size} != config vocab_size {config.vocab_size}")

    meta = header["model"]
    if meta["kind"] == "plain":
        model = Model(config, tensors)
    else:
        base: dict = {}
        quant = meta["quantized"]
        names = {n for n in tensors if not n.endswith((".lora_a", ".lora_b",
                                                       ".codes", ".scales",
                                                       ".zero_points"))}
        for name in names:
            base[name] = tensors[name]
        for name, q in quant.items():
            base[name] = QuantizedMatrix(
                tuple(q["shape"]), q["block_size"],
                tensors[name + ".scales"], tensors[name + ".zero_points"],
                tensors[name + ".codes"])
        adapters = {}
        for target in meta["adapter_targets"]:
            adapters[target] = LoraAdapter(
                target=target, a=tensors[target + ".lora_a"],
                b=tensors[target + ".lora_b"], rank=meta["rank"],
                alpha=meta["alpha"])
        model = AdaptedModel(config, base, adapters, meta["rank"], meta["alpha"],
                             meta["train_head"])
    return model, vocab, header.get("extra", {})


def model_hash(model) -> str:
    """sha256 over all tensors in name order; stable id for run metadata."""
    tensors, _ = _collect_tensors(model)
    digest = hashlib.sha256()
    for name in sorted(tensors):
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(tensors[name]).tobytes())
    return digest.hexdigest()
