"""Featureful baseline: character n-gram profiles and a linear classifier.

Class profiles hold 2-gram and 3-gram counts from training records only.
A domain is scored by six features: Jaccard similarity of its gram set to
each class profile, KL divergence of its smoothed gram distribution from
each class distribution (both averaged over the two gram orders), plus raw
length and character entropy. A seeded logistic regression over those
features gives the malicious score.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .domains import DomainName, SuffixMode, strip_suffix
from .errors import OneClassEmptyError
from .tokenizer import _CHARSET  # the closed domain charset

GRAM_ALPHABET_SIZE = {n: len(_CHARSET) ** n for n in (2, 3)}
DEFAULT_EPSILON = 1e-6


def extract_ngrams(domain: DomainName, n: int) -> Counter:
    """Sliding-window grams over the dot-joined name. Shorter-than-n
    domains yield an empty multiset (callers may count these)."""
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    text = domain.text
    if len(text) < n:
        return Counter()
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def jaccard(a, b) -> float:
    """|a n b| / |a u b| over gram sets; 0 when both are empty."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def kl_divergence(p, q, epsilon: float = DEFAULT_EPSILON) -> float:
    """sum p*ln(p/q) over two distributions on the same alphabet, both
    additively smoothed by ``epsilon``; non-negative, 0 iff p == q."""
    p = np.asarray(p, dtype=np.float64) + epsilon
    q = np.asarray(q, dtype=np.float64) + epsilon
    if p.shape != q.shape:
        raise ValueError("distributions must share an alphabet")
    p = p / p.sum()
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)))


@dataclass
class NGramProfile:
    """Smoothed gram distribution for one class and gram order.

    ``distribution(gram)`` spreads ``epsilon`` mass over the full gram
    alphabet so unseen grams keep non-zero probability.
    """

    n: int
    counts: Counter
    epsilon: float = DEFAULT_EPSILON

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def _denom(self) -> float:
        return self.total + self.epsilon * GRAM_ALPHABET_SIZE[self.n]

    def probability(self, gram: str) -> float:
        return (self.counts.get(gram, 0) + self.epsilon) / self._denom

    def gram_set(self) -> set:
        return set(self.counts)

    def kl_from(self, counts: Counter) -> float:
        """KL(domain || profile) between epsilon-smoothed distributions,
        computed sparsely: grams unseen on both sides contribute one shared
        closed-form term."""
        v = GRAM_ALPHABET_SIZE[self.n]
        d_total = sum(counts.values())
        d_denom = d_total + self.epsilon * v
        support = set(counts) | set(self.counts)
        kl = 0.0
        for gram in support:
            p = (counts.get(gram, 0) + self.epsilon) / d_denom
            q = self.probability(gram)
            kl += p * math.log(p / q)
        unseen = v - len(support)
        if unseen:
            p0 = self.epsilon / d_denom
            q0 = self.epsilon / self._denom
            kl += unseen * p0 * math.log(p0 / q0)
        return kl

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "epsilon": self.epsilon,
                           "counts": dict(sorted(self.counts.items()))},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NGramProfile":
        d = json.loads(text)
        return cls(n=d["n"], counts=Counter(d["counts"]), epsilon=d["epsilon"])


@dataclass
class ClassProfiles:
    benign: dict          # n -> NGramProfile
    malicious: dict

    def to_json(self) -> str:
        return json.dumps({
            side: {str(n): json.loads(prof.to_json())
                   for n, prof in profiles.items()}
            for side, profiles in (("benign", self.benign),
                                   ("malicious", self.malicious))
        }, sort_keys=True)


def build_profiles(train_records, suffix_mode: SuffixMode | None = None,
                   epsilon: float = DEFAULT_EPSILON) -> ClassProfiles:
    """2-gram and 3-gram class profiles from training records only."""
    suffix_mode = suffix_mode or SuffixMode.full()
    sides = {"benign": {2: Counter(), 3: Counter()},
             "malicious": {2: Counter(), 3: Counter()}}
    seen = {"benign": False, "malicious": False}
    for rec in train_records:
        side = "malicious" if rec.label.malicious else "benign"
        seen[side] = True
        domain = strip_suffix(rec.domain, suffix_mode)
        for n in (2, 3):
            sides[side][n].update(extract_ngrams(domain, n))
    for side, present in seen.items():
        if not present:
            raise OneClassEmptyError(f"no {side} training records")
    return ClassProfiles(
        benign={n: NGramProfile(n, sides["benign"][n], epsilon) for n in (2, 3)},
        malicious={n: NGramProfile(n, sides["malicious"][n], epsilon) for n in (2, 3)},
    )


FEATURE_NAMES = ("jaccard_benign", "jaccard_malicious",
                 "kl_benign", "kl_malicious", "length", "entropy")


def char_entropy(text: str) -> float:
    """Shannon entropy (bits) of the character distribution."""
    if not text:
        return 0.0
    counts = Counter(text)
    total = len(text)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def featurize(domain: DomainName, profiles: ClassProfiles,
              suffix_mode: SuffixMode | None = None) -> np.ndarray:
    """Six-feature vector; the per-gram-order scores are averaged over
    n = 2 and n = 3."""
    suffix_mode = suffix_mode or SuffixMode.full()
    stripped = strip_suffix(domain, suffix_mode)
    grams = {n: extract_ngrams(stripped, n) for n in (2, 3)}
    jac_b = jac_m = kl_b = kl_m = 0.0
    for n in (2, 3):
        gset = set(grams[n])
        jac_b += jaccard(gset, profiles.benign[n].gram_set())
        jac_m += jaccard(gset, profiles.malicious[n].gram_set())
        kl_b += profiles.benign[n].kl_from(grams[n])
        kl_m += profiles.malicious[n].kl_from(grams[n])
    text = stripped.text
    return np.array([jac_b / 2, jac_m / 2, kl_b / 2, kl_m / 2,
                     float(len(text)), char_entropy(text)])


@dataclass
class LogisticModel:
    """Plain-gradient-descent logistic regression with train-set
    standardization folded into the model."""

    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def scores(self, features: np.ndarray) -> np.ndarray:
        z = (features - self.feature_mean) / self.feature_std
        logits = z @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-logits))


def train_logistic(features: np.ndarray, labels: np.ndarray, *,
                   learning_rate: float = 0.5, iterations: int = 400,
                   seed: int = 0) -> LogisticModel:
    """Full-batch gradient descent on the logistic loss, seeded init."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    z = (x - mean) / std
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, z.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(iterations):
        p = 1.0 / (1.0 + np.exp(-(z @ w + b)))
        err = p - y
        w -= learning_rate * (z.T @ err) / n
        b -= learning_rate * err.mean()
    return LogisticModel(weights=w, bias=b, feature_mean=mean, feature_std=std)
