"""Streaming domain scorer: line stream in, ``domain<TAB>score<TAB>verdict``
out, bounded memory regardless of stream length."""

from __future__ import annotations

from . import neural
from .domains import normalize_domain
from .errors import CheckpointIncompatibleError, DataError
from .tokenizer import Vocabulary, encode


def predict_stream(model, vocab: Vocabulary, lines, threshold: float = 0.5,
                   batch_size: int = 256, on_reject=None):
    """Yield one scored output line per parseable input line, in order.

    ``lines`` may be any iterable (file, stdin, generator); it is consumed
    batch by batch, so memory stays O(batch). Malformed lines go to the
    ``on_reject(line, reason)`` callback instead of the output. The score
    is the malicious-class probability; a score strictly above ``threshold``
    reads ``malicious``, ties read ``benign``.
    """
    if model.config.n_classes != 2:
        raise CheckpointIncompatibleError(
            f"streaming scorer needs a binary checkpoint, got "
            f"{model.config.n_classes} classes")
    if vocab.size != model.config.vocab_size:
        raise CheckpointIncompatibleError(
            f"vocabulary size {vocab.size} != model vocab {model.config.vocab_size}")

    pending: list[tuple[str, object]] = []

    def flush():
        batch = [encode(d, model.config.max_len, vocab) for _, d in pending]
        scores = neural.forward(model, batch).class_probs[:, 1]
        for (text, _), score in zip(pending, scores):
            verdict = "malicious" if score > threshold else "benign"
            yield f"{text}\t{score:.6f}\t{verdict}"
        pending.clear()

    for raw in lines:
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        try:
            domain = normalize_domain(line)
        except DataError as exc:
            if on_reject is not None:
                on_reject(line, str(exc))
            continue
        pending.append((domain.text, domain))
        if len(pending) >= batch_size:
            yield from flush()
    if pending:
        yield from flush()
