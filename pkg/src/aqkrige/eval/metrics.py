"""Interpolation error metrics and hotspot retrieval scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Metrics:
    mape: float
    rmse: float
    n: int
    mape_se: float = 0.0
    rmse_se: float = 0.0


def compute_metrics(truth, pred):
    """MAPE (%) over cells with truth > 0 and RMSE over all paired cells.

    Cells where either side is missing (NaN) are skipped.
    """
    truth = np.asarray(truth, dtype=float).ravel()
    pred = np.asarray(pred, dtype=float).ravel()
    ok = np.isfinite(truth) & np.isfinite(pred)
    t, p = truth[ok], pred[ok]
    if len(t) == 0:
        return Metrics(float("nan"), float("nan"), 0)
    pos = t > 0
    mape = float(np.mean(np.abs(p[pos] - t[pos]) / t[pos]) * 100.0) if pos.any() else float("nan")
    rmse = float(np.sqrt(np.mean((p - t) ** 2)))
    return Metrics(mape, rmse, int(len(t)))


def aggregate(per_repeat):
    """Mean metrics over repeats with standard errors of the mean."""
    mapes = np.array([m.mape for m in per_repeat])
    rmses = np.array([m.rmse for m in per_repeat])
    k = len(per_repeat)
    se = (lambda a: float(np.std(a, ddof=1) / np.sqrt(k))) if k > 1 else (lambda a: 0.0)
    return Metrics(float(np.mean(mapes)), float(np.mean(rmses)), int(sum(m.n for m in per_repeat)),
                   se(mapes), se(rmses))


@dataclass(frozen=True)
class RetrievalReport:
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int
    condition: dict = field(default_factory=dict)
    vacuous: bool = False

    def as_row(self):
        row = {"precision": self.precision, "recall": self.recall, "tp": self.tp, "fp": self.fp,
               "fn": self.fn, "vacuous": self.vacuous}
        row.update(self.condition)
        return row


def score_retrieval(true_set, pred_set, condition=None):
    """Precision/recall of predicted hotspot keys against true ones.

    An empty denominator yields 1.0 for that ratio; when both sets are empty
    the report is flagged ``vacuous``.
    """
    true_set, pred_set = set(true_set), set(pred_set)
    tp = len(true_set & pred_set)
    fp = len(pred_set - true_set)
    fn = len(true_set - pred_set)
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return RetrievalReport(precision, recall, tp, fp, fn, dict(condition or {}),
                           vacuous=not true_set and not pred_set)
