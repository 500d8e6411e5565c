"""Feed parsing, dataset assembly, stratified splitting, and leakage audit.

Supported line formats (UTF-8, LF or CRLF, ``#`` comments skipped):

* ``alexa_csv``  -- ``rank,domain`` benign ranking rows
* ``family_csv`` -- ``family,domain`` threat-feed rows; family ``benign``
  marks the negative class
* ``mixed_csv``  -- ``domain,family`` (the toolkit's canonical on-disk form)
* ``exfil_csv``  -- ``qname,source`` DNS query logs; source ``benign`` marks
  normal traffic, anything else names the exfiltration tool

Malformed lines are never dropped silently; they land in the parse report.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import Enum

from .domains import (
    DomainName,
    Label,
    SuffixMode,
    has_suffix,
    normalize_domain,
    strip_suffix,
)
from .errors import (
    AllLinesRejectedError,
    BadRatiosError,
    DataError,
    OneClassEmptyError,
    UnknownFormatError,
)
from .rng import SplitMix64, derive_seed


class Source(Enum):
    ALEXA = "alexa"
    BAMBENEK = "bambenek"
    NETLAB360 = "netlab360"
    MIXED_CSV = "mixed_csv"
    EXFIL_LOG = "exfil_log"


@dataclass(frozen=True)
class DatasetRecord:
    domain: DomainName
    label: Label
    source: Source = Source.MIXED_CSV

    @property
    def key(self) -> tuple[str, bool]:
        return (self.domain.text, self.label.malicious)


@dataclass
class ParseReport:
    accepted: int = 0
    rejected: list = field(default_factory=list)  # (line_no, line, reason)
    unknown_families: dict = field(default_factory=dict)

    def reject(self, line_no: int, line: str, reason: str) -> None:
        self.rejected.append((line_no, line, reason))

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": [
                {"line": n, "text": t, "reason": r} for n, t, r in self.rejected
            ],
            "unknown_families": dict(self.unknown_families),
        }


_FORMATS = ("alexa_csv", "family_csv", "mixed_csv", "exfil_csv")

_DEFAULT_SOURCE = {
    "alexa_csv": Source.ALEXA,
    "family_csv": Source.NETLAB360,
    "mixed_csv": Source.MIXED_CSV,
    "exfil_csv": Source.EXFIL_LOG,
}


def parse_feed(stream, fmt: str, source: Source | None = None,
               known_families: set | None = None):
    """Parse one feed into records plus a :class:`ParseReport`.

    ``stream`` is bytes, text, or an iterable of lines. Unknown families in
    ``family_csv`` rows are kept and counted, not rejected. Raises
    :class:`UnknownFormatError` for a bad ``fmt`` and
    :class:`AllLinesRejectedError` when content lines exist but none parse.
    """
    if fmt not in _FORMATS:
        raise UnknownFormatError(f"format must be one of {_FORMATS}, got {fmt!r}")
    source = source or _DEFAULT_SOURCE[fmt]
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)

    records: list[DatasetRecord] = []
    report = ParseReport()
    saw_content = False
    for line_no, raw_line in enumerate(stream, start=1):
        line = raw_line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        saw_content = True
        parts = line.split(",")
        if len(parts) != 2:
            report.reject(line_no, line, f"expected 2 fields, got {len(parts)}")
            continue
        a, b = (p.strip() for p in parts)
        try:
            if fmt == "alexa_csv":
                int(a)  # rank column
                rec = DatasetRecord(normalize_domain(b), Label.benign(), source)
            elif fmt == "family_csv":
                rec = _tagged_record(b, a, source, known_families, report)
            elif fmt == "mixed_csv":
                rec = _tagged_record(a, b, source, known_families, report)
            else:  # exfil_csv
                rec = _tagged_record(a, b, source, known_families, report)
        except (DataError, ValueError) as exc:
            report.reject(line_no, line, str(exc))
            continue
        records.append(rec)
        report.accepted += 1
    if saw_content and not records:
        raise AllLinesRejectedError(f"all {len(report.rejected)} lines rejected")
    return records, report


def _tagged_record(domain_text, family, source, known_families, report):
    if not family:
        raise ValueError("empty family field")
    label = Label.benign() if family == "benign" else Label.dga(family)
    if (label.malicious and known_families is not None
            and family not in known_families):
        report.unknown_families[family] = report.unknown_families.get(family, 0) + 1
    return DatasetRecord(normalize_domain(domain_text), label, source)


def merge_shuffle(parts, seed: int) -> list[DatasetRecord]:
    """Concatenate feeds and shuffle; the permutation depends only on the
    seed, so re-runs are byte-identical on any platform."""
    merged = [rec for part in parts for rec in part]
    SplitMix64(derive_seed(seed, "merge_shuffle")).shuffle(merged)
    return merged


@dataclass
class DedupResult:
    records: list
    removed_count: int
    conflicts: list  # domains seen with both labels; all their rows dropped


def dedup(records) -> DedupResult:
    """Keep the first occurrence of each (domain, binary label).

    A domain appearing with both labels is a labelling conflict: every row
    for it is dropped and the domain reported. Idempotent.
    """
    by_domain: dict[str, bool] = {}
    conflicted: set[str] = set()
    for rec in records:
        text = rec.domain.text
        prior = by_domain.get(text)
        if prior is not None and prior != rec.label.malicious:
            conflicted.add(text)
        else:
            by_domain[text] = rec.label.malicious
    seen: set[tuple[str, bool]] = set()
    kept = []
    for rec in records:
        if rec.domain.text in conflicted or rec.key in seen:
            continue
        seen.add(rec.key)
        kept.append(rec)
    return DedupResult(
        records=kept,
        removed_count=len(records) - len(kept),
        conflicts=sorted(conflicted),
    )


@dataclass
class Splits:
    train: list
    validation: list
    test: list
    ratios: tuple[float, float, float]
    seed: int

    def partitions(self):
        return (("train", self.train), ("validation", self.validation),
                ("test", self.test))


def stratified_split(records, ratios, seed: int) -> Splits:
    """Disjoint, exhaustive train/validation/test partitions, stratified per
    family to within one record.

    Allocation per family: floor(ratio * n) each, with leftover units awarded
    in fixed partition order (train, then validation, then test) -- this
    keeps the +/-1 bound for any ratios and sends a single-record family to
    train.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatiosError(f"ratios {ratios} do not sum to 1")
    if any(r < 0 for r in ratios):
        raise BadRatiosError(f"ratios {ratios} contain a negative entry")
    if not records:
        raise BadRatiosError("cannot split an empty record list")

    by_family: dict[str, list] = {}
    for rec in records:
        by_family.setdefault(rec.label.family, []).append(rec)

    rng = SplitMix64(derive_seed(seed, "stratified_split"))
    parts: tuple[list, list, list] = ([], [], [])
    for family in sorted(by_family):
        group = by_family[family]
        rng.derive(family).shuffle(group)
        n = len(group)
        counts = [int(r * n) for r in ratios]
        leftover = n - sum(counts)
        for i in range(3):
            if leftover == 0:
                break
            counts[i] += 1
            leftover -= 1
        start = 0
        for part, c in zip(parts, counts):
            part.extend(group[start:start + c])
            start += c
    return Splits(train=parts[0], validation=parts[1], test=parts[2],
                  ratios=tuple(ratios), seed=seed)


def balance(records, seed: int) -> list[DatasetRecord]:
    """Downsample the majority binary class, uniformly at random, to the
    minority count. Survivors keep their original relative order."""
    benign_idx = [i for i, r in enumerate(records) if not r.label.malicious]
    malicious_idx = [i for i, r in enumerate(records) if r.label.malicious]
    if not benign_idx or not malicious_idx:
        missing = "benign" if not benign_idx else "malicious"
        raise OneClassEmptyError(f"no {missing} records to balance against")
    if len(benign_idx) == len(malicious_idx):
        return list(records)
    if len(benign_idx) > len(malicious_idx):
        majority, minority = benign_idx, malicious_idx
    else:
        majority, minority = malicious_idx, benign_idx
    rng = SplitMix64(derive_seed(seed, "balance"))
    chosen = rng.sample_indices(len(majority), len(minority))
    kept = sorted(set(minority) | {majority[j] for j in chosen})
    return [records[i] for i in kept]


def sanitize_exfil(records, shared_suffix: str,
                   is_benign_source=None) -> list[DatasetRecord]:
    """Strip a corpus-wide shared suffix and fix up tool-generated labels.

    The suffix (for instance the sandbox zone every injected query sits
    under) is removed wherever present so the model cannot key on it.
    ``is_benign_source`` optionally relabels records whose source tool is
    actually benign (AV-product telemetry); it receives the record and
    returns True to force the benign label.
    """
    mode = SuffixMode.strip_fixed(shared_suffix)
    out = []
    for rec in records:
        domain = rec.domain
        if has_suffix(domain, shared_suffix):
            domain = strip_suffix(domain, mode)
        label = rec.label
        if is_benign_source is not None and label.malicious and is_benign_source(rec):
            label = Label.benign()
        out.append(DatasetRecord(domain, label, rec.source))
    return out


@dataclass
class AuditReport:
    duplicate_groups: list            # (domain, [partition names])
    cross_split_overlap_count: int
    suffix_concentration: dict        # suffix -> (malicious share, benign share)
    verdict: str                      # "clean" | "leakage_suspected"

    def to_dict(self) -> dict:
        return {
            "duplicate_groups": [
                {"domain": d, "partitions": p} for d, p in self.duplicate_groups
            ],
            "cross_split_overlap_count": self.cross_split_overlap_count,
            "suffix_concentration": {
                s: {"malicious_share": m, "benign_share": b}
                for s, (m, b) in self.suffix_concentration.items()
            },
            "verdict": self.verdict,
        }


BENIGN_SHARE_EPSILON = 1e-3
_MIN_REPORT_SHARE = 0.01


def audit_leakage(splits: Splits,
                  concentration_threshold: float = 0.99) -> AuditReport:
    """Flag train/test contamination and giveaway suffixes.

    Two leak signals: (a) the same normalized domain in more than one
    partition; (b) a one- or two-label suffix carried by at least
    ``concentration_threshold`` of malicious records while essentially
    absent from benign ones -- a label proxy the model would simply
    memorize.
    """
    where: dict[str, list[str]] = {}
    for name, part in splits.partitions():
        for rec in part:
            slots = where.setdefault(rec.domain.text, [])
            if name not in slots:
                slots.append(name)
    duplicate_groups = sorted(
        (d, parts) for d, parts in where.items() if len(parts) > 1
    )

    suffix_counts: dict[str, list[int]] = {}
    totals = [0, 0]  # malicious, benign
    for _, part in splits.partitions():
        for rec in part:
            cls = 0 if rec.label.malicious else 1
            totals[cls] += 1
            labels = rec.domain.labels
            candidates = {labels[-1]}
            if len(labels) > 2:
                candidates.add(".".join(labels[-2:]))
            for suffix in candidates:
                suffix_counts.setdefault(suffix, [0, 0])[cls] += 1

    concentration: dict[str, tuple[float, float]] = {}
    flagged = False
    for suffix, (mal, ben) in suffix_counts.items():
        mal_share = mal / totals[0] if totals[0] else 0.0
        ben_share = ben / totals[1] if totals[1] else 0.0
        if max(mal_share, ben_share) >= _MIN_REPORT_SHARE:
            concentration[suffix] = (mal_share, ben_share)
        if mal_share >= concentration_threshold and ben_share <= BENIGN_SHARE_EPSILON:
            concentration[suffix] = (mal_share, ben_share)
            flagged = True

    verdict = "leakage_suspected" if duplicate_groups or flagged else "clean"
    return AuditReport(
        duplicate_groups=duplicate_groups,
        cross_split_overlap_count=len(duplicate_groups),
        suffix_concentration=concentration,
        verdict=verdict,
    )


# --- canonical CSV I/O ---

def write_canonical(records, path) -> None:
    """Write ``domain,family`` rows (family ``benign`` for the negative
    class), LF line endings, no header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(f"{rec.domain.text},{rec.label.family}\n")


def read_canonical(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_feed(fh, "mixed_csv")
