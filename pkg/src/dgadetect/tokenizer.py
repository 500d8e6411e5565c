"""Character-level encoding of domain names into fixed-length id sequences.

The vocabulary is the closed domain charset plus three reserved ids, not a
learned subword table: domains are short and the charset is fixed, so a
static map keeps encodings deterministic everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .domains import DomainName

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2

_CHARSET = "abcdefghijklmnopqrstuvwxyz0123456789._-"

DEFAULT_MAX_LEN = 64


@dataclass(frozen=True)
class Vocabulary:
    """Dense char -> id map: PAD=0, UNK=1, CLS=2, then the 39-char domain
    alphabet, giving size 42."""

    id_of: dict

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(id_of={ch: i + 3 for i, ch in enumerate(_CHARSET)})

    @property
    def size(self) -> int:
        return len(self.id_of) + 3

    def char_of(self, token_id: int) -> str:
        for ch, i in self.id_of.items():
            if i == token_id:
                return ch
        return "?"

    def to_json(self) -> str:
        full = {"<pad>": PAD_ID, "<unk>": UNK_ID, "<cls>": CLS_ID}
        full.update(self.id_of)
        return json.dumps(full, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        full = json.loads(text)
        id_of = {k: v for k, v in full.items() if not k.startswith("<")}
        vocab = cls(id_of=id_of)
        ids = sorted(full.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids are not dense")
        return vocab


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length id vector with its validity mask.

    ``mask`` is a prefix of True followed by False; ``true_length`` counts
    the real tokens including the leading CLS.
    """

    ids: np.ndarray
    mask: np.ndarray
    true_length: int

    def __post_init__(self):
        if self.ids.shape != self.mask.shape:
            raise ValueError("ids and mask length differ")


def encode(domain: DomainName, max_len: int = DEFAULT_MAX_LEN,
           vocab: Vocabulary | None = None) -> TokenSequence:
    """[CLS] + character ids of the dotted string, right-truncated to
    ``max_len`` and PAD-filled. Characters outside the vocabulary map to
    UNK (normalization should have rejected them already)."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    vocab = vocab or Vocabulary.default()
    text = domain.text
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    ids[0] = CLS_ID
    n = min(len(text), max_len - 1)
    for i in range(n):
        ids[i + 1] = vocab.id_of.get(text[i], UNK_ID)
    mask = np.zeros(max_len, dtype=bool)
    mask[: n + 1] = True
    return TokenSequence(ids=ids, mask=mask, true_length=n + 1)


def decode(seq: TokenSequence, vocab: Vocabulary | None = None) -> str:
    """Inverse of :func:`encode` on the non-PAD, non-CLS positions; UNK
    renders as '?'."""
    vocab = vocab or Vocabulary.default()
    rev = {i: ch for ch, i in vocab.id_of.items()}
    out = []
    for token_id in seq.ids:
        t = int(token_id)
        if t in (PAD_ID, CLS_ID):
            continue
        out.append(rev.get(t, "?"))
    return "".join(out)


def encode_batch(domains, max_len: int = DEFAULT_MAX_LEN,
                 vocab: Vocabulary | None = None) -> list[TokenSequence]:
    vocab = vocab or Vocabulary.default()
    return [encode(d, max_len, vocab) for d in domains]


def batch_arrays(seqs) -> tuple[np.ndarray, np.ndarray]:
    """Stack sequences into (ids, mask) arrays trimmed to the batch's
    longest true length.

    Trimming makes model outputs independent, bit for bit, of how much
    padding an encoder appended, and skips dead computation on PAD tails.
    """
    if not seqs:
        raise ValueError("empty batch")
    width = max(s.true_length for s in seqs)
    ids = np.stack([s.ids[:width] for s in seqs])
    mask = np.stack([s.mask[:width] for s in seqs])
    return ids, mask
