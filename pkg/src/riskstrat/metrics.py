"""Evaluation metrics: banded regression accuracy, mean absolute score
difference, binary confusion reports, and cross-fold pooling.

Rates are recomputed from pooled integer counts when folds are aggregated, so
pooled values equal an independent recomputation over the concatenated data
exactly; per-fold reports are retained and a macro (mean-of-folds) view is
emitted alongside in the serialized form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np


def _check_pair(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size == 0:
        raise ValueError("empty input")
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    return pred, truth


def regression_accuracy(pred, truth, tol: float = 1.0) -> float:
    """Fraction of samples with |pred - truth| <= tol (boundary inclusive)."""
    pred, truth = _check_pair(pred, truth)
    return float(np.sum(np.abs(pred - truth) <= tol)) / pred.size


def mean_abs_score_diff(pred, truth) -> float:
    """Mean |pred - truth| in score units."""
    pred, truth = _check_pair(pred, truth)
    return float(np.abs(pred - truth).sum() / pred.size)


@dataclass
class EvalReport:
    accuracy: float
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    mean_abs_diff: Optional[float] = None
    confusion: Optional[Dict[str, int]] = None
    per_fold: List["EvalReport"] = field(default_factory=list)
    n: int = 0
    band_hits: Optional[int] = None
    abs_err_sum: Optional[float] = None
    undefined_rates: List[str] = field(default_factory=list)

    def to_dict(self, include_folds: bool = True) -> dict:
        out = {
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "mean_abs_diff": self.mean_abs_diff,
            "confusion": self.confusion,
            "n": self.n,
            "undefined_rates": list(self.undefined_rates),
        }
        if include_folds and self.per_fold:
            out["per_fold"] = [r.to_dict(include_folds=False) for r in self.per_fold]
            out["macro"] = {
                "accuracy": float(np.mean([r.accuracy for r in self.per_fold])),
                "sensitivity": _mean_defined([r.sensitivity for r in self.per_fold]),
                "specificity": _mean_defined([r.specificity for r in self.per_fold]),
                "mean_abs_diff": _mean_defined(
                    [r.mean_abs_diff for r in self.per_fold]
                ),
            }
        return out


def _mean_defined(values: Sequence[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def binary_report(pred_labels, truth_labels) -> EvalReport:
    """Confusion counts and accuracy/sensitivity/specificity for -1/+1 labels.

    A truth side with no members leaves the corresponding rate undefined: the
    value is None and the rate's name is listed in undefined_rates.
    """
    pred = np.asarray(pred_labels, dtype=int).ravel()
    truth = np.asarray(truth_labels, dtype=int).ravel()
    if pred.size == 0:
        raise ValueError("empty input")
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    for name, arr in (("pred", pred), ("truth", truth)):
        if set(np.unique(arr).tolist()) - {-1, 1}:
            raise ValueError(f"{name} labels must be -1/+1")
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == -1)))
    tn = int(np.sum((pred == -1) & (truth == -1)))
    fn = int(np.sum((pred == -1) & (truth == 1)))
    return _report_from_confusion(tp, fp, tn, fn)


def _report_from_confusion(tp, fp, tn, fn) -> EvalReport:
    n = tp + fp + tn + fn
    undefined = []
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    if tp + fn > 0:
        sensitivity = tp / (tp + fn)
    else:
        undefined.append("sensitivity")
    if tn + fp > 0:
        specificity = tn / (tn + fp)
    else:
        undefined.append("specificity")
    return EvalReport(
        accuracy=(tp + tn) / n,
        sensitivity=sensitivity,
        specificity=specificity,
        confusion={"tp": tp, "fp": fp, "tn": tn, "fn": fn},
        n=n,
        undefined_rates=undefined,
    )


def regression_report(pred, truth, tol: float = 1.0) -> EvalReport:
    """Banded accuracy plus mean absolute difference, with exact counters."""
    pred, truth = _check_pair(pred, truth)
    hits = int(np.sum(np.abs(pred - truth) <= tol))
    abs_sum = float(np.abs(pred - truth).sum())
    return EvalReport(
        accuracy=hits / pred.size,
        mean_abs_diff=abs_sum / pred.size,
        n=pred.size,
        band_hits=hits,
        abs_err_sum=abs_sum,
    )


def aggregate_cv(
    reports: Sequence[EvalReport],
    weights: Optional[Sequence[int]] = None,
) -> EvalReport:
    """Pool fold reports into one by summing counts and recomputing rates."""
    if not reports:
        raise ValueError("no reports to aggregate")
    if weights is not None and len(weights) != len(reports):
        raise ValueError(f"{len(weights)} weights for {len(reports)} reports")
    sizes = list(weights) if weights is not None else [r.n for r in reports]
    if any(s <= 0 for s in sizes):
        raise ValueError("fold sizes must be positive")

    if all(r.confusion is not None for r in reports):
        tp = sum(r.confusion["tp"] for r in reports)
        fp = sum(r.confusion["fp"] for r in reports)
        tn = sum(r.confusion["tn"] for r in reports)
        fn = sum(r.confusion["fn"] for r in reports)
        pooled = _report_from_confusion(tp, fp, tn, fn)
    elif all(r.band_hits is not None for r in reports):
        hits = sum(r.band_hits for r in reports)
        abs_sum = sum(r.abs_err_sum for r in reports)
        total = sum(sizes)
        pooled = EvalReport(
            accuracy=hits / total,
            mean_abs_diff=abs_sum / total,
            n=total,
            band_hits=hits,
            abs_err_sum=abs_sum,
        )
    else:
        raise ValueError("cannot pool a mix of binary and regression reports")
    pooled.per_fold = list(reports)
    return pooled
