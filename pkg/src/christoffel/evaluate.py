"""Detection curves, precision-recall curves and AUPR for outlyingness scores.

All statistics depend on the order of the scores only.  Rows with equal
scores cross every threshold together, so results do not depend on how
ties happen to be ordered in the input.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .basis import basis_size
from .ingest import LabeledDataset
from .model import CholeskyFailure, fit_points


@dataclass(frozen=True, eq=False)
class ScoredDataset:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        y = np.asarray(self.labels, dtype=bool).reshape(-1)
        if s.shape != y.shape:
            raise ValueError(f"{s.size} scores but {y.size} labels")
        if not np.isfinite(s).all():
            raise ValueError("scores must be finite")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)


@dataclass(frozen=True, eq=False)
class CurvePoints:
    x: np.ndarray
    y: np.ndarray
    kind: str

    def __len__(self) -> int:
        return self.x.size

    def pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))

    def to_csv(self, path) -> None:
        write_rows(path, ("x", "y"), zip(self.x.tolist(), self.y.tolist()))


def _grouped_counts(sd: ScoredDataset) -> tuple[np.ndarray, np.ndarray, int]:
    """Cumulative (flagged, true positives) at each distinct threshold, scores descending."""
    if sd.scores.size == 0 or not sd.labels.any():
        raise ValueError("curve needs at least one positive label")
    order = np.argsort(-sd.scores, kind="stable")
    s = sd.scores[order]
    tp = np.cumsum(sd.labels[order])
    # last index of each block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    return ends + 1, tp[ends], int(tp[-1])


def detection_curve(sd: ScoredDataset) -> CurvePoints:
    """Recall against the fraction of examples flagged, from (0, 0) to (1, 1)."""
    flagged, tp, k = _grouped_counts(sd)
    n = sd.scores.size
    x = np.r_[0.0, flagged / n]
    y = np.r_[0.0, tp / k]
    return CurvePoints(x, y, "detection")


def pr_curve(sd: ScoredDataset) -> CurvePoints:
    """(recall, precision) at each distinct score threshold, highest threshold first."""
    flagged, tp, k = _grouped_counts(sd)
    return CurvePoints(tp / k, tp / flagged, "precision_recall")


def aupr(sd: ScoredDataset) -> float:
    """Step integral sum_i (R_i - R_{i-1}) P_i over the achieved recall levels."""
    curve = pr_curve(sd)
    dr = np.diff(np.r_[0.0, curve.x])
    return float(np.sum(dr * curve.y))


@dataclass(frozen=True)
class SweepRow:
    d: int
    aupr: Optional[float]
    error: Optional[str] = None


def sweep_degree(dataset: LabeledDataset, d_values: Iterable[int], ridge: float = 0.0,
                 precondition: bool = True, curves: Optional[dict] = None) -> list[SweepRow]:
    """Fit on all points, score the same points, report AUPR per degree (sorted by d).

    A singular fit or too few points for some d is reported in that row.  If
    ``curves`` is a dict it receives the PR curve for each successful d.
    """
    rows = []
    for d in sorted(set(int(v) for v in d_values)):
        s = basis_size(dataset.p, d)
        if dataset.n < s:
            rows.append(SweepRow(d, None, f"n = {dataset.n} < s(d) = {s}"))
            continue
        try:
            model = fit_points(dataset.points, d, ridge=ridge, precondition=precondition)
        except CholeskyFailure as exc:
            rows.append(SweepRow(d, None, str(exc)))
            continue
        sd = ScoredDataset(model.score_batch(dataset.points), dataset.labels)
        rows.append(SweepRow(d, aupr(sd)))
        if curves is not None:
            curves[d] = pr_curve(sd)
    return rows


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_sweep(path, rows: list[SweepRow]) -> None:
    write_rows(path, ("d", "aupr"), ((r.d, r.aupr if r.aupr is not None else "nan") for r in rows))
