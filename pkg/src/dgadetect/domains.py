"""Canonical domain-name representation and suffix handling.

Every other module works on :class:`DomainName` values produced by
:func:`normalize_domain`, so charset and length validation happens exactly
once, at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    DomainTooLongError,
    EmptyDomainError,
    EmptyLabelError,
    IllegalCharacterError,
    LabelTooLongError,
    SuffixNotPresentError,
    WouldBeEmptyError,
)

# Underscore is deliberately allowed: DNS query logs carry service records
# such as _dmarc.example.com.
LABEL_CHARS = frozenset("abcdefghijklmnopqrstuvwxyz0123456789_-")
MAX_LABEL_LEN = 63
MAX_DOMAIN_LEN = 253


class SuffixKind(Enum):
    FULL = "full"
    NO_TLD = "no_tld"
    STRIP_FIXED = "strip_fixed"


@dataclass(frozen=True)
class SuffixMode:
    """How to treat the right-hand end of a domain before modelling.

    ``full`` keeps the name unchanged, ``no_tld`` drops exactly the final
    label (never a public-suffix lookup), and ``strip_fixed`` removes one
    specific multi-label suffix shared by a corpus.
    """

    kind: SuffixKind
    suffix: str | None = None

    def __post_init__(self):
        if self.kind is SuffixKind.STRIP_FIXED and not self.suffix:
            raise ValueError("strip_fixed requires a non-empty suffix")
        if self.kind is not SuffixKind.STRIP_FIXED and self.suffix is not None:
            raise ValueError(f"{self.kind.value} takes no suffix")

    @classmethod
    def full(cls) -> "SuffixMode":
        return cls(SuffixKind.FULL)

    @classmethod
    def no_tld(cls) -> "SuffixMode":
        return cls(SuffixKind.NO_TLD)

    @classmethod
    def strip_fixed(cls, suffix: str) -> "SuffixMode":
        return cls(SuffixKind.STRIP_FIXED, suffix)

    @classmethod
    def parse(cls, text: str) -> "SuffixMode":
        if text == "full":
            return cls.full()
        if text == "no_tld":
            return cls.no_tld()
        if text.startswith("strip_fixed:"):
            return cls.strip_fixed(text.split(":", 1)[1])
        raise ValueError(f"unknown suffix mode {text!r}")

    def __str__(self) -> str:
        if self.kind is SuffixKind.STRIP_FIXED:
            return f"strip_fixed:{self.suffix}"
        return self.kind.value


@dataclass(frozen=True)
class DomainName:
    """Normalized domain: lowercase labels, left to right, no trailing dot.

    Equality and hashing use the labels only; ``raw`` preserves the input
    for diagnostics.
    """

    labels: tuple[str, ...]
    raw: str = field(compare=False, default="")

    @property
    def text(self) -> str:
        return ".".join(self.labels)

    def to_string(self) -> str:
        return self.text

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Label:
    """Binary ground truth plus the generating family.

    ``family`` is ``"benign"`` exactly when the domain is benign; malicious
    records carry the DGA or exfiltration-tool name.
    """

    malicious: bool
    family: str = "benign"

    def __post_init__(self):
        if (self.family == "benign") == self.malicious:
            raise ValueError(
                f"family {self.family!r} inconsistent with malicious={self.malicious}"
            )

    @classmethod
    def benign(cls) -> "Label":
        return cls(False, "benign")

    @classmethod
    def dga(cls, family: str) -> "Label":
        return cls(True, family)


def normalize_domain(raw: str) -> DomainName:
    """Lowercase, strip the trailing dot, split into validated labels.

    Raises :class:`EmptyDomainError`, :class:`EmptyLabelError`,
    :class:`IllegalCharacterError` (with offending byte and position),
    :class:`LabelTooLongError`, or :class:`DomainTooLongError`.
    """
    text = raw.strip().lower()
    if text.endswith("."):
        text = text[:-1]
    if not text:
        raise EmptyDomainError(f"empty domain from input {raw!r}")
    if len(text) > MAX_DOMAIN_LEN:
        raise DomainTooLongError(f"{len(text)} chars exceeds {MAX_DOMAIN_LEN}: {raw!r}")
    labels = text.split(".")
    offset = 0
    for label in labels:
        if not label:
            raise EmptyLabelError(f"empty label at position {offset} in {raw!r}")
        if len(label) > MAX_LABEL_LEN:
            raise LabelTooLongError(f"label {label!r} exceeds {MAX_LABEL_LEN} chars")
        for i, ch in enumerate(label):
            if ch not in LABEL_CHARS:
                raise IllegalCharacterError(raw, ch, offset + i)
        offset += len(label) + 1
    return DomainName(labels=tuple(labels), raw=raw)


def strip_suffix(domain: DomainName, mode: SuffixMode) -> DomainName:
    """Apply a :class:`SuffixMode` to a validated domain."""
    if mode.kind is SuffixKind.FULL:
        return domain
    if mode.kind is SuffixKind.NO_TLD:
        if len(domain.labels) < 2:
            raise WouldBeEmptyError(f"cannot drop the only label of {domain.text!r}")
        return DomainName(labels=domain.labels[:-1], raw=domain.raw)
    suffix_labels = normalize_domain(mode.suffix).labels
    n = len(suffix_labels)
    if domain.labels[-n:] != suffix_labels:
        raise SuffixNotPresentError(f"{mode.suffix!r} not a suffix of {domain.text!r}")
    if len(domain.labels) == n:
        raise WouldBeEmptyError(f"stripping {mode.suffix!r} empties {domain.text!r}")
    return DomainName(labels=domain.labels[:-n], raw=domain.raw)


def has_suffix(domain: DomainName, suffix: str) -> bool:
    """Label-aligned, case-insensitive suffix test."""
    suffix_labels = normalize_domain(suffix).labels
    n = len(suffix_labels)
    return len(domain.labels) > n and domain.labels[-n:] == suffix_labels
