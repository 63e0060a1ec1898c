"""Micro and per-goal precision/recall/F1 plus model comparison."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError
from .labelgen import N_GOALS


def _ratio(num, den):
    return num / den if den else 0.0


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _as_matrix(vectors, name):
    arr = np.asarray(vectors, dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, N_GOALS)
    if arr.ndim != 2:
        raise LengthMismatchError(f"{name} must be a sequence of equal-length vectors")
    return arr


def confusion_counts(pred, gold):
    """Per-goal integer ``(tp, fp, fn)`` arrays."""
    P, G = _as_matrix(pred, "pred"), _as_matrix(gold, "gold")
    if P.shape[0] != G.shape[0]:
        raise LengthMismatchError(f"{P.shape[0]} predictions vs {G.shape[0]} gold vectors")
    if P.shape[1] != G.shape[1]:
        raise LengthMismatchError(f"vector length {P.shape[1]} vs {G.shape[1]}")
    tp = ((P == 1) & (G == 1)).sum(axis=0)
    fp = ((P == 1) & (G == 0)).sum(axis=0)
    fn = ((P == 0) & (G == 1)).sum(axis=0)
    return tp, fp, fn


def micro_metrics(pred, gold):
    """Pooled ``(precision, recall, f1)`` over every (course, goal) pair."""
    tp, fp, fn = (int(x.sum()) for x in confusion_counts(pred, gold))
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return p, r, _f1(p, r)


@dataclass(frozen=True)
class GoalScore:
    goal: int
    f1: float
    support: int
    tp: int
    fp: int
    fn: int

    @property
    def zero_support(self):
        # nothing to find and nothing predicted: excluded from macro averages
        return self.support == 0 and self.fp == 0

    def to_dict(self):
        return {
            "goal": self.goal, "f1": self.f1, "support": self.support,
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "zero_support": self.zero_support,
        }


def per_label_f1(pred, gold):
    tp, fp, fn = confusion_counts(pred, gold)
    rows = []
    for i in range(tp.shape[0]):
        t, f_p, f_n = int(tp[i]), int(fp[i]), int(fn[i])
        f1 = _f1(_ratio(t, t + f_p), _ratio(t, t + f_n))
        rows.append(GoalScore(i + 1, f1, t + f_n, t, f_p, f_n))
    return rows


def macro_f1(rows):
    scored = [r.f1 for r in rows if not r.zero_support]
    return sum(scored) / len(scored) if scored else 0.0


@dataclass
class MetricsReport:
    model_name: str
    dataset_name: str
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_goal: list = field(default_factory=list)

    def to_dict(self):
        return {
            "model_name": self.model_name,
            "dataset_name": self.dataset_name,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "per_goal": [r.to_dict() for r in self.per_goal],
        }

    @classmethod
    def from_dict(cls, d):
        rows = [
            GoalScore(int(r["goal"]), float(r["f1"]), int(r["support"]),
                      int(r["tp"]), int(r["fp"]), int(r["fn"]))
            for r in d.get("per_goal", [])
        ]
        return cls(
            d["model_name"], d.get("dataset_name", ""), float(d["micro_precision"]),
            float(d["micro_recall"]), float(d["micro_f1"]), rows,
        )


def evaluate(pred, gold, model_name="model", dataset_name="test"):
    p, r, f1 = micro_metrics(pred, gold)
    return MetricsReport(model_name, dataset_name, p, r, f1, per_label_f1(pred, gold))


def compare_models(reports):
    """Rank by micro F1, then precision (both descending), then name.

    Returns ``(ranked_reports, best)``.
    """
    if not reports:
        raise ValueError("need at least one report to compare")
    ranked = sorted(reports, key=lambda r: (-r.micro_f1, -r.micro_precision, r.model_name))
    return ranked, ranked[0]


def comparison_rows(ranked):
    return [
        (r.model_name, f"{r.micro_precision:.3f}", f"{r.micro_recall:.3f}", f"{r.micro_f1:.3f}")
        for r in ranked
    ]
