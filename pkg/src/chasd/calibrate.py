"""When and how to calibrate: the confidence gate, contrastive logits and APC truncation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_logits, max_prob, softmax


@dataclass(frozen=True)
class GateDecision:
    triggered: bool
    p_max: float
    argmax_token: int


def gate(dist_ori, tau: float) -> GateDecision:
    """Fire the negative branch iff the top probability is strictly below ``tau``."""
    if not 0 <= tau <= 1:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    idx, p = max_prob(dist_ori)
    return GateDecision(triggered=p < tau, p_max=p, argmax_token=idx)


def contrast_logits(l_ori, l_neg, alpha: float) -> np.ndarray:
    """``(1 + alpha) * l_ori - alpha * l_neg``.

    Evaluated as ``l_ori + alpha * (l_ori - l_neg)`` so that ``alpha == 0`` and
    ``l_neg == l_ori`` return ``l_ori`` bit for bit.
    """
    a = as_logits(l_ori)
    b = as_logits(l_neg)
    if a.shape != b.shape:
        raise ValueError(f"logit length mismatch: {a.size} vs {b.size}")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("contrast expects finite logits")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return a + alpha * (a - b)


def apc_candidates(dist_ori, beta: float) -> np.ndarray:
    """Tokens whose original probability is strictly above ``beta`` times the maximum."""
    if not 0 <= beta < 1:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    p = np.asarray(dist_ori, dtype=np.float64)
    return np.flatnonzero(p > beta * p.max())


def apply_candidates(l_cd, candidates) -> np.ndarray:
    x = as_logits(l_cd)
    idx = np.asarray(candidates, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("candidate set is empty")
    if (idx < 0).any() or (idx >= x.size).any():
        raise ValueError("candidate index out of range")
    out = np.full_like(x, -np.inf)
    out[idx] = x[idx]
    return out


def calibrated_logits(l_ori, l_neg, alpha: float, beta: float) -> tuple[np.ndarray, int]:
    """Contrast then truncate to the APC set of the original distribution.

    Returns the masked logits and the candidate-set size.
    """
    candidates = apc_candidates(softmax(l_ori), beta)
    return apply_candidates(contrast_logits(l_ori, l_neg, alpha), candidates), int(candidates.size)
