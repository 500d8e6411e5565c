"""Config-driven experiment runner.

Five designs: ``binary_large`` (one balanced train/val/test draw),
``binary_per_family`` (one shared binary model tested on a balanced set per
eligible family), ``multiclass`` (benign + the largest families as separate
classes), ``unknown_loo`` (train with one family excluded, test on it), and
``cross_dataset`` (full-domain vs no-TLD paired runs over a 30/20/50 split).

Sizes default to the headline protocol sizes and scale uniformly via
``scale``; eligibility thresholds scale the same way. Every run draws its
partitions disjointly from a deduplicated corpus and ends with a leakage
audit whose zero-overlap half is asserted, not assumed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import checkpoint
from .errors import (
    DataError,
    FamilyIneligibleError,
    HeldOutFamilyLeakedError,
    InsufficientDataError,
)
from .estimators import CharTransformerClassifier, NGramClassifier
from .ingest import Splits, audit_leakage, dedup, read_canonical
from .manifest import (
    LOO_MIN_COUNT,
    PER_FAMILY_MIN_COUNT,
    eligible_families,
    manifest_from_records,
    top_families,
)
from .rng import SplitMix64, derive_seed
from .training import ConfusionMatrix, report_from_confusion

SPEC_VERSION = 1

KINDS = ("binary_large", "binary_per_family", "multiclass", "unknown_loo",
         "cross_dataset")
MODELS = ("transformer", "transformer+lora", "transformer+qlora", "ngram")

_DEFAULT_SIZES = {
    "binary_large": {"train_size": 6000, "val_size": 2000, "test_size": 100_000},
    "binary_per_family": {"train_size": 6000, "val_size": 2000, "test_size": 10_000},
    "multiclass": {"train_size": 6000, "val_size": 2000, "test_size": 100_000},
    "unknown_loo": {"train_size": 6000, "val_size": 2000, "test_size": 40_000},
    "cross_dataset": {"train_size": 0, "val_size": 0, "test_size": 0},
}


@dataclass
class ExperimentSpec:
    kind: str
    dataset: str | None = None
    model: str = "transformer"
    seed: int = 0
    scale: float = 1.0
    suffix_mode: str = "full"
    train_size: int | None = None
    val_size: int | None = None
    test_size: int | None = None
    n_families: int = 20          # binary_per_family roster size
    n_classes: int = 20           # multiclass label-space size incl. benign
    held_out: str | None = None   # unknown_loo family
    ratios: tuple = (0.3, 0.2, 0.5)  # cross_dataset split
    epochs: int | None = None
    batch_size: int | None = None
    learning_rate: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.model not in MODELS:
            raise DataError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.scale <= 0:
            raise DataError("scale must be positive")
        if self.kind == "unknown_loo" and not self.held_out:
            raise DataError("unknown_loo requires held_out")

    def size(self, name: str) -> int:
        explicit = getattr(self, name)
        base = explicit if explicit is not None else _DEFAULT_SIZES[self.kind][name]
        return max(1, int(round(base * self.scale))) if base else 0

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            v = getattr(self, f.name)
            d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


def parse_spec(text: str) -> ExperimentSpec:
    """Parse the flat ``key = value`` experiment format (``#`` comments).

    ``version = 1`` is required; unknown keys are rejected so typos surface
    instead of silently using defaults.
    """
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"spec line {line_no}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    if values.pop("version", None) != str(SPEC_VERSION):
        raise DataError(f"spec must declare 'version = {SPEC_VERSION}'")
    if "kind" not in values:
        raise DataError("spec must declare 'kind'")

    kwargs: dict = {}
    converters = {
        "kind": str, "dataset": str, "model": str, "suffix_mode": str,
        "held_out": str, "seed": int, "train_size": int, "val_size": int,
        "test_size": int, "n_families": int, "n_classes": int,
        "epochs": int, "batch_size": int, "scale": float,
        "learning_rate": float,
        "ratios": lambda s: tuple(float(x) for x in s.split("/")),
    }
    for key, val in values.items():
        if key not in converters:
            raise DataError(f"unknown spec key {key!r}")
        try:
            kwargs[key] = converters[key](val)
        except ValueError as exc:
            raise DataError(f"bad value for {key!r}: {val!r}") from exc
    return ExperimentSpec(**kwargs)


def format_spec(spec: ExperimentSpec) -> str:
    lines = [f"version = {SPEC_VERSION}"]
    for f in fields(spec):
        v = getattr(spec, f.name)
        if v is None:
            continue
        if f.name == "ratios":
            v = "/".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def load_spec(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())


@dataclass
class ExperimentResult:
    spec: dict
    reports: dict                    # name -> EvalReport dict
    per_family: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"spec": self.spec, "reports": self.reports,
                "per_family": self.per_family, "audit": self.audit,
                "metadata": self.metadata}

    def comparable_dict(self) -> dict:
        """Result with wall-clock-derived fields removed, for determinism
        comparisons."""
        d = self.to_dict()
        d["metadata"] = {k: v for k, v in d["metadata"].items()
                         if k not in ("durations", "throughput")}
        d["reports"] = {
            name: {k: v for k, v in rep.items() if k != "throughput"}
            for name, rep in d["reports"].items()
        }
        return d


class _Pool:
    """Seeded shuffle consumed without replacement."""

    def __init__(self, records, rng: SplitMix64, what: str):
        self.items = list(records)
        rng.shuffle(self.items)
        self.cursor = 0
        self.what = what

    def take(self, n: int) -> list:
        if self.cursor + n > len(self.items):
            raise InsufficientDataError(
                f"need {n} more {self.what} records, only "
                f"{len(self.items) - self.cursor} left of {len(self.items)}")
        out = self.items[self.cursor:self.cursor + n]
        self.cursor += n
        return out


def assert_no_held_out(records, family: str, where: str) -> None:
    """Exhaustive scan; a single held-out record is an error, not a warning."""
    leaked = sum(1 for r in records if r.label.family == family)
    if leaked:
        raise HeldOutFamilyLeakedError(
            f"{leaked} {family!r} record(s) found in {where}")


def _xy(records):
    return [r.domain for r in records], np.array(
        [1 if r.label.malicious else 0 for r in records], dtype=np.int64)


def _make_estimator(spec: ExperimentSpec, suffix_mode: str):
    if spec.model == "ngram":
        return NGramClassifier(suffix_mode=suffix_mode, seed=spec.seed)
    adapter = {"transformer": None, "transformer+lora": "lora",
               "transformer+qlora": "qlora"}[spec.model]
    kwargs: dict = {"adapter": adapter, "suffix_mode": suffix_mode,
                    "seed": spec.seed}
    if spec.epochs is not None:
        kwargs["epochs"] = spec.epochs
    if spec.batch_size is not None:
        kwargs["batch_size"] = spec.batch_size
    if spec.learning_rate is not None:
        kwargs["learning_rate"] = spec.learning_rate
    return CharTransformerClassifier(**kwargs)


def _fit(est, train_records, val_records):
    x_train, y_train = _xy(train_records)
    if isinstance(est, NGramClassifier) or not val_records:
        est.fit(x_train, y_train)
    else:
        x_val, y_val = _xy(val_records)
        est.fit(x_train, y_train, validation=(x_val, y_val))
    return est


def _score(est, records, y, class_names):
    x = [r.domain for r in records]
    preds = np.asarray(est.predict(x), dtype=np.int64)
    cm = ConfusionMatrix.from_predictions(np.asarray(y), preds, class_names)
    return report_from_confusion(cm)


def _estimator_hash(est) -> str:
    if isinstance(est, NGramClassifier):
        import hashlib
        digest = hashlib.sha256(est.profiles_.to_json().encode())
        digest.update(est.linear_.weights.tobytes())
        digest.update(np.float64(est.linear_.bias).tobytes())
        return digest.hexdigest()
    return checkpoint.model_hash(est.model_)


def _audit(train, val, test, spec) -> dict:
    splits = Splits(train=list(train), validation=list(val), test=list(test),
                    ratios=(0.0, 0.0, 1.0), seed=spec.seed)
    report = audit_leakage(splits)
    if report.cross_split_overlap_count != 0:
        raise DataError(
            f"protocol produced {report.cross_split_overlap_count} "
            "cross-partition duplicates; corpus dedup failed")
    return report.to_dict()


def _finish(spec, est, reports, per_family, audit_dict, metadata) -> ExperimentResult:
    metadata.setdefault("seed", spec.seed)
    metadata.setdefault("scale", spec.scale)
    metadata["checkpoint_hash"] = _estimator_hash(est)
    result = ExperimentResult(spec=spec.to_dict(), reports=reports,
                              per_family=per_family, audit=audit_dict,
                              metadata=metadata)
    result.estimator = est  # not serialized; lets callers save a checkpoint
    return result


def _load_corpus(spec: ExperimentSpec, corpus):
    if corpus is None:
        if not spec.dataset:
            raise DataError("spec has no dataset path and no corpus was supplied")
        corpus, _ = read_canonical(spec.dataset)
    return dedup(corpus).records


BINARY_CLASSES = ("benign", "malicious")


def run_binary_large(spec: ExperimentSpec, corpus=None) -> ExperimentResult:
    """Balanced binary classification with a large held-out test draw."""
    records = _load_corpus(spec, corpus)
    rng = SplitMix64(derive_seed(spec.seed, f"{spec.kind}:draw"))
    benign = _Pool([r for r in records if not r.label.malicious], rng.derive("benign"),
                   "benign")
    malicious = _Pool([r for r in records if r.label.malicious], rng.derive("malicious"),
                      "malicious")
    n_train, n_val, n_test = (spec.size("train_size"), spec.size("val_size"),
                              spec.size("test_size"))
    train = benign.take(n_train // 2) + malicious.take(n_train - n_train // 2)
    val = benign.take(n_val // 2) + malicious.take(n_val - n_val // 2)
    test = benign.take(n_test // 2) + malicious.take(n_test - n_test // 2)

    est = _make_estimator(spec, spec.suffix_mode)
    t0 = time.perf_counter()
    _fit(est, train, val)
    t1 = time.perf_counter()
    report = _score(est, test, _xy(test)[1], BINARY_CLASSES)
    t2 = time.perf_counter()
    _fill_throughput(est, report, len(train), len(val), len(test), t1 - t0, t2 - t1)

    audit_dict = _audit(train, val, test, spec)
    metadata = {
        "requested": {"train": n_train, "val": n_val, "test": n_test},
        "actual": {"train": len(train), "val": len(val), "test": len(test)},
        "durations": {"fit_sec": t1 - t0, "eval_sec": t2 - t1},
    }
    return _finish(spec, est, {"test": report.to_dict()}, {}, audit_dict, metadata)


def _fill_throughput(est, report, n_train, n_val, n_test, fit_sec, eval_sec):
    report.throughput["inference"] = n_test / max(eval_sec, 1e-9)
    result = getattr(est, "train_result_", None)
    if result is not None and result.history:
        epochs = len(result.history)
        report.throughput["train"] = epochs * n_train / max(fit_sec, 1e-9)
        report.throughput["validation"] = epochs * n_val / max(fit_sec, 1e-9)


def run_binary_per_family(spec: ExperimentSpec, corpus=None) -> ExperimentResult:
    """One shared binary model, tested on a balanced set per eligible family.

    Eligibility: strictly more than 5,000 records (scaled). The roster is
    the largest ``n_families`` eligible families. Benign test domains are
    never reused across family rows.
    """
    records = _load_corpus(spec, corpus)
    manifest = manifest_from_records(records)
    min_count = int(round(PER_FAMILY_MIN_COUNT * spec.scale))
    roster = top_families(manifest, spec.n_families, min_count)
    if not roster:
        raise InsufficientDataError(
            f"no family exceeds the eligibility threshold {min_count}")
    for family in roster:
        check_family_eligible(manifest, family, min_count)

    rng = SplitMix64(derive_seed(spec.seed, f"{spec.kind}:draw"))
    benign = _Pool([r for r in records if not r.label.malicious],
                   rng.derive("benign"), "benign")
    malicious_all = [r for r in records if r.label.malicious]
    mal_pool = _Pool(malicious_all, rng.derive("malicious"), "malicious")
    n_train, n_val = spec.size("train_size"), spec.size("val_size")
    per_test = spec.size("test_size")
    train = benign.take(n_train // 2) + mal_pool.take(n_train - n_train // 2)
    val = benign.take(n_val // 2) + mal_pool.take(n_val - n_val // 2)

    est = _make_estimator(spec, spec.suffix_mode)
    t0 = time.perf_counter()
    _fit(est, train, val)
    fit_sec = time.perf_counter() - t0

    taken = {r.domain.text for r in train} | {r.domain.text for r in val}
    family_pools = {
        fam: _Pool([r for r in malicious_all
                    if r.label.family == fam and r.domain.text not in taken],
                   rng.derive(f"family:{fam}"), fam)
        for fam in roster
    }
    reports = {}
    per_family = {}
    all_tests = []
    t0 = time.perf_counter()
    for fam in roster:
        fam_test = family_pools[fam].take(per_test // 2)
        ben_test = benign.take(per_test - per_test // 2)
        test = ben_test + fam_test
        all_tests.extend(test)
        report = _score(est, test, _xy(test)[1], BINARY_CLASSES)
        reports[fam] = report.to_dict()
        mal = next(c for c in report.per_class if c.label == "malicious")
        per_family[fam] = {"precision": mal.precision, "recall": mal.recall,
                           "f1": mal.f1, "accuracy": report.accuracy}
    eval_sec = time.perf_counter() - t0

    audit_dict = _audit(train, val, all_tests, spec)
    mean_acc = sum(v["accuracy"] for v in per_family.values()) / len(per_family)
    metadata = {
        "families": roster,
        "mean_accuracy": mean_acc,
        "requested": {"train": n_train, "val": n_val, "test_per_family": per_test},
        "durations": {"fit_sec": fit_sec, "eval_sec": eval_sec},
    }
    return _finish(spec, est, reports, per_family, audit_dict, metadata)


def check_family_eligible(manifest: dict, family: str, min_count: int) -> None:
    count = manifest.get(family, 0)
    if count <= min_count:
        raise FamilyIneligibleError(
            f"family {family!r} has {count} records, needs more than {min_count}")


def run_multiclass(spec: ExperimentSpec, corpus=None) -> ExperimentResult:
    """Benign plus the largest families as separate classes."""
    records = _load_corpus(spec, corpus)
    manifest = manifest_from_records(records)
    k = spec.n_classes
    families = top_families(manifest, k - 1, 0)
    if len(families) < k - 1:
        raise InsufficientDataError(
            f"corpus has {len(families)} families, multiclass needs {k - 1}")
    class_names = ["benign"] + families
    per_test = spec.size("test_size") // k
    per_train = max(1, spec.size("train_size") // k)
    per_val = max(1, spec.size("val_size") // k)

    rng = SplitMix64(derive_seed(spec.seed, f"{spec.kind}:draw"))
    pools = {}
    pools["benign"] = _Pool([r for r in records if not r.label.malicious],
                            rng.derive("benign"), "benign")
    for fam in families:
        pools[fam] = _Pool([r for r in records if r.label.family == fam],
                           rng.derive(f"family:{fam}"), fam)

    def draw(n):
        recs, ys = [], []
        for ci, name in enumerate(class_names):
            got = pools[name].take(n)
            recs.extend(got)
            ys.extend([ci] * n)
        return recs, np.array(ys, dtype=np.int64)

    train, y_train = draw(per_train)
    val, y_val = draw(per_val)
    test, y_test = draw(per_test)

    est = _make_estimator(spec, spec.suffix_mode)
    if spec.model == "ngram":
        raise DataError("the n-gram baseline is binary; multiclass needs a transformer")
    t0 = time.perf_counter()
    est.fit([r.domain for r in train], y_train,
            validation=([r.domain for r in val], y_val))
    t1 = time.perf_counter()
    preds = np.asarray(est.predict([r.domain for r in test]), dtype=np.int64)
    cm = ConfusionMatrix.from_predictions(y_test, preds, class_names)
    report = report_from_confusion(cm)
    t2 = time.perf_counter()
    _fill_throughput(est, report, len(train), len(val), len(test), t1 - t0, t2 - t1)

    audit_dict = _audit(train, val, test, spec)
    metadata = {
        "class_names": class_names,
        "requested": {"per_class_train": per_train, "per_class_val": per_val,
                      "per_class_test": per_test},
        "durations": {"fit_sec": t1 - t0, "eval_sec": t2 - t1},
    }
    return _finish(spec, est, {"test": report.to_dict()}, {}, audit_dict, metadata)


def run_unknown_loo(spec: ExperimentSpec, corpus=None) -> ExperimentResult:
    """Train with one family excluded, test on benign + that family only.

    The exclusion is verified by scanning the final train/validation sets;
    a leaked record raises :class:`HeldOutFamilyLeakedError`.
    """
    records = _load_corpus(spec, corpus)
    family = spec.held_out
    manifest = manifest_from_records(records)
    if family not in manifest:
        raise InsufficientDataError(f"held-out family {family!r} not in corpus")

    rng = SplitMix64(derive_seed(spec.seed, f"{spec.kind}:draw"))
    benign = _Pool([r for r in records if not r.label.malicious],
                   rng.derive("benign"), "benign")
    other_mal = _Pool([r for r in records
                       if r.label.malicious and r.label.family != family],
                      rng.derive("malicious"), "non-held-out malicious")
    held = _Pool([r for r in records if r.label.family == family],
                 rng.derive("held_out"), family)

    n_train, n_val, n_test = (spec.size("train_size"), spec.size("val_size"),
                              spec.size("test_size"))
    train = benign.take(n_train // 2) + other_mal.take(n_train - n_train // 2)
    val = benign.take(n_val // 2) + other_mal.take(n_val - n_val // 2)
    test = benign.take(n_test // 2) + held.take(n_test - n_test // 2)

    assert_no_held_out(train, family, "train")
    assert_no_held_out(val, family, "validation")

    est = _make_estimator(spec, spec.suffix_mode)
    t0 = time.perf_counter()
    _fit(est, train, val)
    t1 = time.perf_counter()
    report = _score(est, test, _xy(test)[1], BINARY_CLASSES)
    t2 = time.perf_counter()
    _fill_throughput(est, report, len(train), len(val), len(test), t1 - t0, t2 - t1)

    audit_dict = _audit(train, val, test, spec)
    metadata = {
        "held_out": family,
        "requested": {"train": n_train, "val": n_val, "test": n_test},
        "actual": {"train": len(train), "val": len(val), "test": len(test)},
        "durations": {"fit_sec": t1 - t0, "eval_sec": t2 - t1},
    }
    return _finish(spec, est, {"test": report.to_dict()}, {}, audit_dict, metadata)


def loo_sweep_families(manifest: dict, scale: float = 1.0) -> list[str]:
    """Families large enough for the leave-one-out sweep (> 20k scaled)."""
    return eligible_families(manifest, int(round(LOO_MIN_COUNT * scale)))


def run_cross_dataset(spec: ExperimentSpec, corpus=None) -> ExperimentResult:
    """Paired full-domain / no-TLD runs over one stratified 30/20/50 split."""
    from .ingest import stratified_split

    records = _load_corpus(spec, corpus)
    splits = stratified_split(records, spec.ratios, spec.seed)
    reports = {}
    durations = {}
    est = None
    for mode in ("full", "no_tld"):
        est = _make_estimator(spec, mode)
        t0 = time.perf_counter()
        _fit(est, splits.train, splits.validation)
        t1 = time.perf_counter()
        report = _score(est, splits.test, _xy(splits.test)[1], BINARY_CLASSES)
        t2 = time.perf_counter()
        _fill_throughput(est, report, len(splits.train), len(splits.validation),
                         len(splits.test), t1 - t0, t2 - t1)
        reports[mode] = report.to_dict()
        durations[mode] = {"fit_sec": t1 - t0, "eval_sec": t2 - t1}

    audit_dict = _audit(splits.train, splits.validation, splits.test, spec)
    metadata = {
        "ratios": list(spec.ratios),
        "actual": {"train": len(splits.train), "val": len(splits.validation),
                   "test": len(splits.test)},
        "durations": durations,
    }
    return _finish(spec, est, reports, {}, audit_dict, metadata)


_RUNNERS = {
    "binary_large": run_binary_large,
    "binary_per_family": run_binary_per_family,
    "multiclass": run_multiclass,
    "unknown_loo": run_unknown_loo,
    "cross_dataset": run_cross_dataset,
}


def run_experiment(spec: ExperimentSpec, corpus=None) -> ExperimentResult:
    return _RUNNERS[spec.kind](spec, corpus)
