"""Benchmark scoring: POPE accuracy/F1, AMBER, MME and MMHal-Bench aggregates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

YES = "yes"
NO = "no"


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def normalize_answer(label: str) -> str:
    s = str(label).strip().lower()
    if s not in (YES, NO):
        raise ValueError(f"expected 'yes' or 'no', got {label!r}")
    return s


def confusion(preds: Sequence[str], golds: Sequence[str]) -> ConfusionMatrix:
    """Count outcomes with "yes" as the positive class."""
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predictions vs {len(golds)} golds")
    if not preds:
        raise ValueError("need at least one prediction")
    tp = tn = fp = fn = 0
    for p, g in zip(preds, golds):
        p, g = normalize_answer(p), normalize_answer(g)
        if p == YES:
            tp += g == YES
            fp += g == NO
        else:
            fn += g == YES
            tn += g == NO
    return ConfusionMatrix(tp, tn, fp, fn)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise UndefinedMetricError("accuracy is undefined on an empty confusion matrix")
    return (cm.tp + cm.tn) / cm.total


def f1(cm: ConfusionMatrix) -> float:
    denom = 2 * cm.tp + cm.fp + cm.fn
    if denom == 0:
        raise UndefinedMetricError("F1 is undefined: no positive predictions or labels")
    return 2 * cm.tp / denom


def precision(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fp == 0:
        raise UndefinedMetricError("precision is undefined without positive predictions")
    return cm.tp / (cm.tp + cm.fp)


def recall(cm: ConfusionMatrix) -> float:
    if cm.tp + cm.fn == 0:
        raise UndefinedMetricError("recall is undefined without positive labels")
    return cm.tp / (cm.tp + cm.fn)


def _check_pct(name: str, value: float) -> None:
    if not 0 <= value <= 100:
        raise ValueError(f"{name} must be in [0, 100], got {value}")


def amber_score(chair_i: float, f1_pct: float) -> float:
    """Mean of generative fidelity ``100 - CHAIR_i`` and discriminative F1 (both in percent)."""
    _check_pct("chair_i", chair_i)
    _check_pct("f1_pct", f1_pct)
    return ((100 - chair_i) + f1_pct) / 2


@dataclass(frozen=True)
class MmeCategory:
    name: str
    acc: float
    acc_plus: float

    def __post_init__(self):
        for field_name in ("acc", "acc_plus"):
            v = getattr(self, field_name)
            if not 0 <= v <= 1:
                raise ValueError(f"{self.name}: {field_name} must be in [0, 1], got {v}")


def mme_category_from_pairs(name: str, pairs: Iterable[tuple[bool, bool]]) -> MmeCategory:
    """Score one category from per-image question pairs.

    Each pair holds the correctness of the two questions asked about one image.
    ``acc`` is per-question accuracy; ``acc_plus`` counts images with both right.
    """
    pairs = [(bool(a), bool(b)) for a, b in pairs]
    if not pairs:
        raise ValueError(f"{name}: no question pairs")
    acc = sum(a + b for a, b in pairs) / (2 * len(pairs))
    acc_plus = sum(a and b for a, b in pairs) / len(pairs)
    assert acc_plus <= acc
    return MmeCategory(name, acc, acc_plus)


def mme_score(categories: Sequence[MmeCategory]) -> float:
    if not categories:
        raise ValueError("MME score needs at least one category")
    return sum(100 * c.acc + 100 * c.acc_plus for c in categories)


def mmhal_average(scores: Sequence[float]) -> float:
    """Mean judge rating; ratings live on the 0-6 scale."""
    if len(scores) == 0:
        raise ValueError("MMHal average needs at least one score")
    for s in scores:
        if not 0 <= s <= 6:
            raise ValueError(f"MMHal rating out of range [0, 6]: {s}")
    return sum(scores) / len(scores)
