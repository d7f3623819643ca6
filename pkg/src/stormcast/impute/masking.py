"""Synthetic masking of present cells and scoring of imputations against them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from ..errors import IncompleteCandidate, MaskTooAggressive
from ..series import Panel

MIN_REMAINING = 10


@dataclass(frozen=True)
class MaskSpec:
    point_fraction: float = 0.12
    block_count: int = 0
    block_length: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not 0 <= self.point_fraction < 1:
            raise ValueError("point_fraction must be in [0, 1)")
        if self.block_count < 0 or self.block_length < 1:
            raise ValueError("block_count must be >= 0 and block_length >= 1")


class MaskedCell(NamedTuple):
    row: int
    column: str
    value: float


def apply_mask(p: Panel, m: MaskSpec) -> tuple:
    """Hide a seeded random subset of present cells.

    Point masking drops each present cell independently with probability
    ``point_fraction``; then ``block_count`` runs of ``block_length`` rows
    are hidden, each within a single randomly chosen column.

    Returns the masked panel and the hidden cells with their true values,
    ordered by (row, column position).
    """
    rng = np.random.default_rng(m.rng_seed)
    n, k = p.shape
    hide = (rng.random((n, k)) < m.point_fraction) & p.present
    if n and k:
        for _ in range(m.block_count):
            j = int(rng.integers(k))
            start = int(rng.integers(0, max(n - m.block_length, 0) + 1))
            hide[start:start + m.block_length, j] |= p.present[start:start + m.block_length, j]
    remaining = (p.present & ~hide).sum(axis=0)
    low = [name for name, r in zip(p.names, remaining) if r < MIN_REMAINING]
    if low:
        raise MaskTooAggressive(f"mask leaves fewer than {MIN_REMAINING} present values in {low}")
    rows, cols = np.nonzero(hide)
    truth = [MaskedCell(int(i), p.names[j], float(p.values[i, j])) for i, j in zip(rows, cols)]
    return p.with_values(np.where(hide, np.nan, p.values), p.present & ~hide), truth


@dataclass
class ImputationReport:
    # scores[method][column] = {"rmse", "mae", "n"}; column "__all__" pools every cell
    scores: dict = field(default_factory=dict)
    winners: dict = field(default_factory=dict)
    winner: str = None

    def to_dict(self) -> dict:
        return {"schema_version": 1, "scores": self.scores, "winners": self.winners,
                "winner": self.winner}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _err_stats(err):
    err = np.asarray(err, dtype=float)
    if err.size == 0:
        return {"rmse": 0.0, "mae": 0.0, "n": 0}
    return {"rmse": float(np.sqrt(np.mean(err ** 2))), "mae": float(np.mean(np.abs(err))),
            "n": int(err.size)}


def _pick(scores, col):
    # lowest RMSE; ties go to the lexicographically first method name
    return min(sorted(scores), key=lambda meth: scores[meth][col]["rmse"])


def score_imputation(truth, candidates: Mapping[str, Panel]) -> ImputationReport:
    """RMSE and MAE of each candidate at the masked cells, per column and pooled."""
    columns = sorted({c.column for c in truth})
    report = ImputationReport()
    for meth, panel in candidates.items():
        errs = {c: [] for c in columns}
        for cell in truth:
            j = panel.col(cell.column)
            if not panel.present[cell.row, j]:
                raise IncompleteCandidate(f"{meth} left ({cell.row}, {cell.column}) missing")
            errs[cell.column].append(panel.values[cell.row, j] - cell.value)
        per = {c: _err_stats(e) for c, e in errs.items()}
        per["__all__"] = _err_stats([e for c in columns for e in errs[c]])
        report.scores[meth] = per
    if report.scores:
        for col in columns:
            report.winners[col] = _pick(report.scores, col)
        report.winner = _pick(report.scores, "__all__")
    return report
