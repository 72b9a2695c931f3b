"""Small vector primitives with pinned semantics.

Ties are always broken in favour of the lowest index.  ``-inf`` is accepted
in logits only as the result of candidate masking.
"""
from __future__ import annotations

import numpy as np


class DegenerateLogitsError(ValueError):
    """Raised when logits carry no finite entry to normalise."""


def as_logits(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DegenerateLogitsError("logits must be a non-empty vector")
    if np.isnan(arr).any() or np.isposinf(arr).any():
        raise ValueError("logits must not contain NaN or +inf")
    return arr


def softmax(logits) -> np.ndarray:
    """Max-stabilised softmax; ``-inf`` entries receive probability 0."""
    x = as_logits(logits)
    finite = np.isfinite(x)
    if not finite.any():
        raise DegenerateLogitsError("all logits are -inf")
    shifted = x - x[finite].max()
    e = np.exp(shifted)  # exp(-inf) == 0
    return e / e.sum()


def max_prob(dist) -> tuple[int, float]:
    p = np.asarray(dist, dtype=np.float64)
    idx = int(np.argmax(p))
    return idx, float(p[idx])


def top_m_indices(scores, m: int) -> np.ndarray:
    """Indices of the ``m`` largest scores, lowest index first among ties, sorted ascending."""
    s = np.asarray(scores, dtype=np.float64)
    n = s.size
    if s.ndim != 1 or n == 0:
        raise ValueError("scores must be a non-empty vector")
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    # lexsort sorts by the last key first: descending score, then ascending index
    order = np.lexsort((np.arange(n), -s))
    return np.sort(order[:m])
