"""Deterministic synthetic corpora for tests, demos, and desk-scale runs.

Benign names are built from a small embedded wordlist, malicious names from
per-family random-character styles (charset + length band + TLD pool derived
from the family name). The point is a corpus with the right *shape* --
word-like negatives against high-entropy positives across many families --
not a recreation of any real malware generator.
"""

from __future__ import annotations

from .domains import DomainName, Label
from .ingest import DatasetRecord, Source
from .rng import SplitMix64, derive_seed

_WORDS = (
    "acorn air alpha amber apple arch atlas auto bake bank base bay beach bean "
    "bell berry bird blue boat book box breeze brick bridge bright brook cake "
    "camp candle care cart cave cedar chair chart cherry city clay clear cliff "
    "cloud coast coin cook cool copper coral corn craft crane creek crown cup "
    "dawn deer delta dew dock door dove dream drift drum dusk eagle earth east "
    "echo edge elm ember face fair falcon farm fast feather fern field fig fire "
    "fish flag flash fleet flint flora flow fog forge fort fox fresh frost gap "
    "garden gate gem glen gold grain grape green grove hall harbor hawk hazel "
    "hill hive home honey hope horn house iris iron island ivy jade jay jet "
    "juno keel keep kelp kind king kite lake lamp land lark leaf ledge lemon "
    "light lily lime linen lion loft log loom lotus lunar map maple marsh mast "
    "meadow mesa mill mint mist moon moss moth nest night noble north nova oak "
    "ocean olive onyx opal orbit otter owl palm park peak pearl pine plain "
    "plum pond poppy port press prime quail quartz quick quill rain ranch "
    "raven reef ridge river robin rock rose rush sage sail salt sand sea seed "
    "shade shell shore silver sky slate snow solar song south spark spring "
    "spruce star stone storm stream summit sun swan swift teal thorn tide "
    "timber top torch trail tree true tulip vale vine violet wave west wheat "
    "willow wind wing winter wolf wood wren yard zephyr zinc"
).split()

_BENIGN_TLDS = ("com", "net", "org", "io", "co")
_DGA_TLD_POOL = ("com", "net", "org", "biz", "info", "ru", "xyz", "top",
                 "cc", "ws", "in", "eu", "tw", "kz", "ga")
_CHARSETS = (
    "abcdefghijklmnopqrstuvwxyz",
    "abcdefghijklmnopqrstuvwxyz0123456789",
    "0123456789abcdef",
)


def benign_domain(rng: SplitMix64) -> str:
    """Word-built name, occasionally hyphenated or www-prefixed."""
    n_words = 1 + rng.below(3)
    words = [_WORDS[rng.below(len(_WORDS))] for _ in range(n_words)]
    sep = "-" if n_words > 1 and rng.below(8) == 0 else ""
    name = sep.join(words)
    if rng.below(20) == 0:
        name += str(rng.below(100))
    host = name + "." + _BENIGN_TLDS[rng.below(len(_BENIGN_TLDS))]
    if rng.below(12) == 0:
        host = "www." + host
    return host


class FamilyStyle:
    """Random-string generator parameters derived from the family name."""

    def __init__(self, family: str):
        rng = SplitMix64(derive_seed(0xD6A, f"style:{family}"))
        self.charset = _CHARSETS[rng.below(len(_CHARSETS))]
        self.min_len = 8 + rng.below(6)
        self.max_len = self.min_len + 6 + rng.below(10)
        k = 2 + rng.below(3)
        start = rng.below(len(_DGA_TLD_POOL) - k)
        self.tlds = _DGA_TLD_POOL[start:start + k]

    def generate(self, rng: SplitMix64) -> str:
        length = self.min_len + rng.below(self.max_len - self.min_len + 1)
        name = "".join(self.charset[rng.below(len(self.charset))]
                       for _ in range(length))
        return name + "." + self.tlds[rng.below(len(self.tlds))]


def make_corpus(n_benign: int, family_counts: dict[str, int],
                seed: int) -> list[DatasetRecord]:
    """Benign + per-family malicious records, all domains distinct.

    Output order: benign block then families in dict order; callers shuffle.
    """
    rng = SplitMix64(derive_seed(seed, "synth"))
    seen: set[str] = set()
    records: list[DatasetRecord] = []

    def fresh(make) -> str:
        while True:
            text = make()
            if text not in seen:
                seen.add(text)
                return text

    benign_rng = rng.derive("benign")
    for _ in range(n_benign):
        text = fresh(lambda: benign_domain(benign_rng))
        records.append(DatasetRecord(
            _quick_domain(text), Label.benign(), Source.MIXED_CSV))
    for family, count in family_counts.items():
        style = FamilyStyle(family)
        fam_rng = rng.derive(f"family:{family}")
        for _ in range(count):
            text = fresh(lambda: style.generate(fam_rng))
            records.append(DatasetRecord(
                _quick_domain(text), Label.dga(family), Source.MIXED_CSV))
    return records


def _quick_domain(text: str) -> DomainName:
    # Generator output is valid by construction; skip re-validation.
    return DomainName(labels=tuple(text.split(".")), raw=text)


def make_exfil_corpus(n_benign: int, n_malicious: int, shared_suffix: str,
                      seed: int, tools=("iodine", "dnsexfiltrator")) -> list[DatasetRecord]:
    """Exfiltration-log shaped fixture: normal queries plus hex-payload
    queries that all sit under one shared zone."""
    rng = SplitMix64(derive_seed(seed, "synth_exfil"))
    records = make_corpus(n_benign, {}, seed)
    hexd = "0123456789abcdef"
    seen = {r.domain.text for r in records}
    for i in range(n_malicious):
        tool = tools[i % len(tools)]
        while True:
            payload = "".join(hexd[rng.below(16)] for _ in range(20 + rng.below(20)))
            text = f"{payload}.{shared_suffix}"
            if text not in seen:
                seen.add(text)
                break
        records.append(DatasetRecord(
            _quick_domain(text), Label.dga(tool), Source.EXFIL_LOG))
    return records
