"""Input validation helpers shared by the estimator layer."""

from __future__ import annotations

import numpy as np

from .domains import DomainName, normalize_domain
from .errors import DataError


def check_domains(X) -> list[DomainName]:
    """Normalize an iterable of domain strings (or pass through already
    normalized :class:`DomainName` values), reporting the offending index
    on failure."""
    out: list[DomainName] = []
    for i, item in enumerate(X):
        if isinstance(item, DomainName):
            out.append(item)
            continue
        if not isinstance(item, str):
            raise DataError(f"X[{i}] is {type(item).__name__}, expected a domain string")
        try:
            out.append(normalize_domain(item))
        except DataError as exc:
            raise DataError(f"X[{i}]: {exc}") from exc
    if not out:
        raise DataError("X is empty")
    return out


def check_targets(y, n_items: int):
    """Encode arbitrary labels as class indices; returns (indices, classes)."""
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_items:
        raise DataError(f"y must be 1-d with {n_items} entries, got shape {y.shape}")
    classes, indices = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise DataError("y must contain at least two classes")
    return indices.astype(np.int64), classes
