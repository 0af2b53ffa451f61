"""Rank statistics and model-ranking reports.

Spearman's rho is the Pearson correlation of fractional (average-tie)
ranks. The weighted Kendall statistic weights each pair by hyperbolic
additive weights over ranks ordered by ground truth descending, so
disagreements among top models cost more than disagreements at the bottom.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import Direction, PerformanceTable, ScoreTable
from .errors import ConstantInputError, DegenerateInputError


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    tau_w: float
    n: int
    signed: bool

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("a correlation needs at least two points")
        if abs(self.rho) > 1.0 + 1e-12 or abs(self.tau_w) > 1.0 + 1e-12:
            raise ValueError("correlation outside [-1, 1]")

    @property
    def unstable(self) -> bool:
        """n = 2 correlations are always +-1 and carry no evidence."""
        return self.n == 2


class RankedModel(NamedTuple):
    model_id: str
    score: float
    rank: int


def fractional_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks ascending in value; ties share their average rank."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(arr.size, dtype=np.float64)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _check_pair(xs: Sequence[float], ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise DegenerateInputError("inputs must be 1-D vectors of equal length")
    if x.size < 2:
        raise DegenerateInputError("need at least two points")
    return x, y


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman's rho with average-tie ranks."""
    x, y = _check_pair(xs, ys)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInputError("spearman is undefined for a constant vector")
    rx = fractional_ranks(x)
    ry = fractional_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def weighted_kendall(truth: Sequence[float], scores: Sequence[float]) -> float:
    """Top-weighted Kendall correlation of ``scores`` against ``truth``.

    Item weights are 1/(r+1) on the 0-based descending truth rank (ties get
    average ranks); a pair weighs the sum of its item weights. Tied pairs
    in either vector contribute sign 0 but keep their weight in the
    normalizer.
    """
    t, s = _check_pair(truth, scores)
    if np.all(t == t[0]):
        raise ConstantInputError("weighted_kendall is undefined for constant truth")
    ranks_desc = fractional_ranks(-t) - 1.0
    item_w = 1.0 / (ranks_desc + 1.0)
    pair_w = item_w[:, None] + item_w[None, :]
    sign_t = np.sign(t[:, None] - t[None, :])
    sign_s = np.sign(s[:, None] - s[None, :])
    iu = np.triu_indices(t.size, k=1)
    numerator = float(np.sum(pair_w[iu] * sign_t[iu] * sign_s[iu]))
    denominator = float(np.sum(pair_w[iu]))
    return numerator / denominator


def evaluate_method(
    scores: ScoreTable, truth: PerformanceTable, dataset_id: str
) -> CorrelationResult:
    """Direction-adjusted rho and tau_w of a method against ground truth.

    Lower-is-better scores are negated first so both statistics read
    positively when the method ranks well.
    """
    score_col = scores.column(dataset_id)
    truth_col = truth.column(dataset_id)
    models = sorted(set(score_col) & set(truth_col))
    if len(models) < 2:
        raise DegenerateInputError(
            f"dataset {dataset_id!r} has {len(models)} models present in both tables, need >= 2"
        )
    s = np.array([score_col[m] for m in models], dtype=np.float64)
    if scores.direction is Direction.LOWER_IS_BETTER:
        s = -s
    t = np.array([truth_col[m] for m in models], dtype=np.float64)
    return CorrelationResult(
        rho=spearman(s, t),
        tau_w=weighted_kendall(t, s),
        n=len(models),
        signed=True,
    )


def rank_models(scores: ScoreTable, dataset_id: str) -> list[RankedModel]:
    """Best-first ranking under the table's direction.

    Ties share a competition rank (1, 2, 2, 4) and are listed in
    lexicographic model order.
    """
    column = scores.column(dataset_id)
    reverse = scores.direction is Direction.HIGHER_IS_BETTER
    ordered = sorted(column.items(), key=lambda kv: (-kv[1] if reverse else kv[1], kv[0]))
    out: list[RankedModel] = []
    for position, (model_id, score) in enumerate(ordered, start=1):
        if out and score == out[-1].score:
            rank = out[-1].rank
        else:
            rank = position
        out.append(RankedModel(model_id=model_id, score=score, rank=rank))
    return out


def performance_correlation_matrix(
    truth: PerformanceTable, datasets: Sequence[str]
) -> np.ndarray:
    """Pairwise Spearman of per-model performance between datasets.

    Symmetric with unit diagonal; cells with fewer than two shared models
    or a constant side are NaN (serialized as empty in CSV reports).
    """
    k = len(datasets)
    matrix = np.full((k, k), np.nan, dtype=np.float64)
    np.fill_diagonal(matrix, 1.0)
    columns = {d: truth.column(d) for d in datasets}
    for i in range(k):
        for j in range(i + 1, k):
            a, b = columns[datasets[i]], columns[datasets[j]]
            models = sorted(set(a) & set(b))
            if len(models) < 2:
                continue
            try:
                value = spearman([a[m] for m in models], [b[m] for m in models])
            except ConstantInputError:
                continue
            matrix[i, j] = matrix[j, i] = value
    return matrix
