"""Proxy-transfer scoring: ATC threshold calibration, probit scaling with
robust linear fits, and the labeled-subset baseline.

Sign convention for ATC: the underlying score is an uncertainty, so a
sample counts as correct when its uncertainty falls BELOW the calibrated
threshold (confidence above the threshold). Reports restate this.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import GenerationRecord, MethodKind, PerformanceTable, ScoreTable
from .errors import DegenerateInputError, RuleError
from .ingest import CorrectnessRule, record_correct

ATC_SIGN_NOTE = "ATC counts a sample as correct iff uncertainty < delta (confidence above threshold)"

PROBIT_EPS = 1e-6


@dataclass(frozen=True)
class AtcThreshold:
    delta: float
    uncertainty_method: MethodKind = MethodKind.NLL_MIN
    proxy_dataset_id: str = ""

    def __post_init__(self) -> None:
        if not math.isfinite(self.delta):
            raise ValueError(f"ATC threshold must be finite, got {self.delta}")


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    scale: float
    iterations: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise ValueError("fit parameters must be finite")
        if not self.scale > 0.0:
            raise ValueError(f"residual scale must be > 0, got {self.scale}")

    def predict(self, x: float) -> float:
        return self.slope * x + self.intercept


def calibrate_atc_threshold(
    proxy: Sequence[tuple[float, bool]],
    method: MethodKind = MethodKind.NLL_MIN,
    proxy_dataset_id: str = "",
) -> AtcThreshold:
    """Pick delta so the fraction of proxy samples with uncertainty below it
    matches proxy accuracy; delta sits at the midpoint between the two
    bracketing order statistics."""
    if not proxy:
        raise DegenerateInputError("ATC calibration requires a non-empty proxy set")
    n = len(proxy)
    n_correct = sum(1 for _, correct in proxy if correct)
    if n_correct == 0 or n_correct == n:
        raise DegenerateInputError(
            "ATC threshold is undefined on an all-correct or all-incorrect proxy set"
        )
    us = sorted(u for u, _ in proxy)
    k = round(n_correct / n * n)
    if k <= 0:
        delta = us[0] - 1e-9 * max(1.0, abs(us[0]))
    elif k >= n:
        delta = us[-1] + 1e-9 * max(1.0, abs(us[-1]))
    else:
        delta = 0.5 * (us[k - 1] + us[k])
    return AtcThreshold(delta=delta, uncertainty_method=method, proxy_dataset_id=proxy_dataset_id)


def atc_estimate(target_uncertainties: Sequence[float], threshold: AtcThreshold) -> float:
    """Estimated accuracy: fraction of target samples below the threshold."""
    if not target_uncertainties:
        raise DegenerateInputError("ATC estimate requires a non-empty target set")
    below = sum(1 for u in target_uncertainties if u < threshold.delta)
    return below / len(target_uncertainties)


# Rational approximation for the inverse standard-normal CDF (relative error
# below 1.15e-9), followed by one Halley refinement that brings it to
# near machine precision.
_PROBIT_A = (
    -3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
    1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00,
)
_PROBIT_B = (
    -5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
    6.680131188771972e+01, -1.328068155288572e+01,
)
_PROBIT_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
    -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00,
)
_PROBIT_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
    3.754408661907416e+00,
)
_PROBIT_P_LOW = 0.02425


def _probit_raw(p: float) -> float:
    a, b, c, d = _PROBIT_A, _PROBIT_B, _PROBIT_C, _PROBIT_D
    if p < _PROBIT_P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    if p > 1.0 - _PROBIT_P_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
        ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    )


def probit(p: float) -> float:
    """Inverse standard-normal CDF; inputs outside [1e-6, 1-1e-6] clamp with
    a warning."""
    if math.isnan(p):
        raise ValueError("probit input must not be NaN")
    if p < PROBIT_EPS or p > 1.0 - PROBIT_EPS:
        warnings.warn(
            f"probit input {p} clamped into [{PROBIT_EPS}, {1.0 - PROBIT_EPS}]",
            RuntimeWarning,
            stacklevel=2,
        )
        p = min(max(p, PROBIT_EPS), 1.0 - PROBIT_EPS)
    x = _probit_raw(p)
    # Halley refinement against the exact CDF expressed through erfc.
    err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def _weighted_line(x: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    sw = float(np.sum(w))
    mx = float(np.sum(w * x)) / sw
    my = float(np.sum(w * y)) / sw
    sxx = float(np.sum(w * (x - mx) ** 2))
    if sxx == 0.0:
        raise DegenerateInputError("x values are degenerate under the current weights")
    slope = float(np.sum(w * (x - mx) * (y - my))) / sxx
    return slope, my - slope * mx


def fit_huber(
    xs: Sequence[float],
    ys: Sequence[float],
    max_iterations: int = 100,
    tol: float = 1e-8,
) -> LinearFit:
    """Robust line fit by iteratively reweighted least squares under the
    Huber loss.

    The tuning constant is 1.345 times a robust residual scale, re-estimated
    each iteration as MAD(residuals) / 0.6745 and floored at 1e-12;
    iteration stops when parameters move less than ``tol``.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise DegenerateInputError("fit_huber requires matched 1-D inputs of length >= 3")
    if np.all(x == x[0]):
        raise DegenerateInputError("fit_huber requires non-constant x values")
    slope, intercept = _weighted_line(x, y, np.ones_like(x))
    scale = 1e-12
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        resid = y - (slope * x + intercept)
        mad = float(np.median(np.abs(resid - np.median(resid))))
        scale = max(mad / 0.6745, 1e-12)
        k = 1.345 * scale
        abs_resid = np.abs(resid)
        with np.errstate(divide="ignore"):
            w = np.where(abs_resid <= k, 1.0, k / abs_resid)
        new_slope, new_intercept = _weighted_line(x, y, w)
        moved = max(abs(new_slope - slope), abs(new_intercept - intercept))
        slope, intercept = new_slope, new_intercept
        if moved < tol:
            break
    return LinearFit(slope=slope, intercept=intercept, scale=scale, iterations=iterations)


def fit_ols(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Ordinary least squares line, closed form."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if np.all(x == x[0]):
        raise DegenerateInputError("fit_ols requires non-constant x values")
    return _weighted_line(x, y, np.ones_like(x))


def aol_scores(
    source_perf: PerformanceTable,
    source_dataset_id: str,
    model_ids: Sequence[str],
    target_datasets: Sequence[str] | None = None,
) -> ScoreTable:
    """Probit-scaled source-benchmark accuracy as a transferable score.

    probit is strictly increasing, so the induced ranking equals the raw
    source-accuracy ranking; the probit scale only matters for the linear
    fits emitted as report overlays.
    """
    column = source_perf.column(source_dataset_id)
    missing = [m for m in model_ids if m not in column]
    if missing:
        raise DegenerateInputError(
            f"models missing from source dataset {source_dataset_id!r}: {', '.join(sorted(missing))}"
        )
    targets = list(target_datasets) if target_datasets is not None else [source_dataset_id]
    entries = {}
    for model_id in model_ids:
        score = probit(column[model_id])
        for dataset_id in targets:
            entries[(model_id, dataset_id)] = score
    return ScoreTable.for_method(MethodKind.AOL, entries)


def subset_baseline(
    records: Sequence[GenerationRecord],
    n: int,
    seed: int,
    rule: CorrectnessRule | Mapping[str, CorrectnessRule] | None = None,
) -> ScoreTable:
    """Accuracy on one seeded draw of n sample ids, shared across models.

    All models are scored on the same sampled ids (paired comparison);
    records must all belong to one target dataset.
    """
    if n < 1:
        raise DegenerateInputError("subset size must be >= 1")
    if not records:
        raise DegenerateInputError("subset_baseline requires records")
    dataset_ids = {r.dataset_id for r in records}
    if len(dataset_ids) != 1:
        raise DegenerateInputError(
            f"subset_baseline expects one dataset, got {sorted(dataset_ids)}"
        )
    dataset_id = dataset_ids.pop()
    per_model: dict[str, dict[str, GenerationRecord]] = {}
    for record in records:
        per_model.setdefault(record.model_id, {})[record.sample_id] = record
    shared_ids = None
    for model_id, by_sample in per_model.items():
        ids = set(by_sample)
        shared_ids = ids if shared_ids is None else shared_ids & ids
    shared = sorted(shared_ids or ())
    if len(shared) < n:
        raise DegenerateInputError(
            f"only {len(shared)} sample ids are shared across all models, need {n}"
        )
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(shared), size=n, replace=False).tolist())
    sampled_ids = [shared[i] for i in chosen]
    entries = {}
    for model_id in sorted(per_model):
        values = []
        for sample_id in sampled_ids:
            record = per_model[model_id][sample_id]
            try:
                values.append(1.0 if record_correct(record, rule) else 0.0)
            except RuleError as exc:
                raise RuleError(f"subset_baseline: {exc}") from exc
        entries[(model_id, dataset_id)] = math.fsum(values) / len(values)
    return ScoreTable.for_method(MethodKind.SUBSET_LABELED, entries)
