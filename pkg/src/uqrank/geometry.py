"""Frechet distance between Gaussian fits of embedding sets, and its
relation to cross-dataset performance correlation.

FD(a, b) = ||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2})

The symmetrized inner product has the same trace as the usual (S_a S_b)^{1/2}
form but stays in symmetric-PSD territory, so a plain eigendecomposition
square root is numerically safe even for rank-deficient covariances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .core import EmbeddingSet, PerformanceTable
from .errors import ConstantInputError, DegenerateInputError
from .rankeval import spearman

SYMMETRY_TOL = 1e-8
EIGENVALUE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class GaussianStats:
    """Sample mean and covariance of one embedding set."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be a d-vector and cov a d x d matrix")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("Gaussian statistics must be finite")
        asym = float(np.max(np.abs(cov - cov.T)))
        if asym > SYMMETRY_TOL * (1.0 + float(np.max(np.abs(cov)))):
            raise ValueError(f"covariance asymmetric beyond tolerance ({asym})")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GaussianStats):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)


def fit_gaussian(embeddings: EmbeddingSet) -> GaussianStats:
    """Sample mean and (n-1)-normalized, symmetrized covariance."""
    n = len(embeddings)
    if n < 2:
        raise DegenerateInputError(f"need at least 2 vectors to fit a Gaussian, got {n}")
    x = np.asarray(embeddings.vectors, dtype=np.float64)
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianStats(mean=mean, cov=cov)


def matrix_sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Slightly negative eigenvalues from roundoff clamp to zero; genuinely
    indefinite or asymmetric input is an error.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.size == 0:
        raise DegenerateInputError("matrix_sqrt_psd requires a non-empty square matrix")
    scale = float(np.max(np.abs(m)))
    asym = float(np.max(np.abs(m - m.T)))
    if asym > SYMMETRY_TOL * (1.0 + scale):
        raise DegenerateInputError(f"matrix asymmetric beyond tolerance ({asym})")
    sym = 0.5 * (m + m.T)
    eigenvalues, eigenvectors = np.linalg.eigh(sym)
    bound = EIGENVALUE_TOL * max(1.0, float(np.max(np.abs(eigenvalues))))
    if float(eigenvalues[0]) < -bound:
        raise DegenerateInputError(
            f"matrix indefinite beyond tolerance (min eigenvalue {eigenvalues[0]})"
        )
    clamped = np.clip(eigenvalues, 0.0, None)
    root = (eigenvectors * np.sqrt(clamped)) @ eigenvectors.T
    return 0.5 * (root + root.T)


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared 2-Wasserstein distance between two Gaussians; negatives from
    roundoff clamp to zero."""
    if a.dim != b.dim:
        raise DegenerateInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = matrix_sqrt_psd(a.cov)
    inner = root_a @ b.cov @ root_a
    cross = matrix_sqrt_psd(0.5 * (inner + inner.T))
    value = float(diff @ diff) + float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    return max(value, 0.0)


class FdPair(NamedTuple):
    dataset_a: str
    dataset_b: str
    fd: float
    rho: float
    is_min_fd_partner: bool


def fd_vs_correlation(
    embeddings: Mapping[str, EmbeddingSet], truth: PerformanceTable
) -> list[FdPair]:
    """For every unordered dataset pair: FD between embedding distributions
    alongside the Spearman correlation of model performance.

    A pair is flagged when it is the minimum-FD pair for either of its
    datasets; each dataset designates exactly one pair (ties resolve to the
    lexicographically first partner).
    """
    datasets = sorted(embeddings)
    if len(datasets) < 2:
        raise DegenerateInputError("fd_vs_correlation needs at least two datasets")
    stats = {d: fit_gaussian(embeddings[d]) for d in datasets}
    fd: dict[tuple[str, str], float] = {}
    rho: dict[tuple[str, str], float] = {}
    for i, d_a in enumerate(datasets):
        for d_b in datasets[i + 1 :]:
            fd[(d_a, d_b)] = frechet_distance(stats[d_a], stats[d_b])
            col_a = truth.column(d_a)
            col_b = truth.column(d_b)
            models = sorted(set(col_a) & set(col_b))
            if len(models) < 2:
                rho[(d_a, d_b)] = math.nan
            else:
                try:
                    rho[(d_a, d_b)] = spearman(
                        [col_a[m] for m in models], [col_b[m] for m in models]
                    )
                except ConstantInputError:
                    rho[(d_a, d_b)] = math.nan
    min_partner_pairs = set()
    for d in datasets:
        best = min(
            (pair for pair in fd if d in pair),
            key=lambda pair: (fd[pair], pair),
        )
        min_partner_pairs.add(best)
    return [
        FdPair(
            dataset_a=d_a,
            dataset_b=d_b,
            fd=fd[(d_a, d_b)],
            rho=rho[(d_a, d_b)],
            is_min_fd_partner=(d_a, d_b) in min_partner_pairs,
        )
        for (d_a, d_b) in sorted(fd)
    ]
