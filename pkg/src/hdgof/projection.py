"""Kernel-weighted residual correlation test along one-dimensional
projections of the covariates.

Given residuals e_i and projected covariates s_i = a'x_i, the statistic is

    T = sum_{i != j} e_i e_j K_h(s_i - s_j)
        / sqrt( 2 * sum_{i != j} e_i^2 e_j^2 K_h(s_i - s_j)^2 )

with the standard normal kernel and bandwidth h = 2 * n^(-1/(4+q)).  Under
a correctly specified mean function T is asymptotically standard normal,
and misspecification pushes it to +infinity, so the p-value is the upper
tail 1 - Phi(T).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .glm import Dataset, residuals

MIN_Q = 1


class DegenerateEstimateError(ValueError):
    """The fitted coefficient vector is zero, so it defines no direction."""


class DegenerateStatisticWarning(UserWarning):
    """The variance estimate under the kernel collapsed to ~0."""


@dataclass(frozen=True)
class Projection:
    """A unit vector direction with a tag recording how it was produced."""

    direction: np.ndarray
    source: str  # "estimated" or "random"

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("direction must be a nonempty 1-d vector")
        nrm = np.linalg.norm(d)
        if not np.isfinite(nrm) or abs(nrm - 1.0) > 1e-8:
            raise ValueError("direction must have unit Euclidean norm")
        if self.source not in ("estimated", "random"):
            raise ValueError("source must be 'estimated' or 'random'")


def sample_projection(p: int, rng: np.random.Generator) -> Projection:
    """Uniform draw from the unit sphere in R^p (normalized normal vector)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    while True:
        v = rng.standard_normal(p)
        nrm = np.linalg.norm(v)
        if nrm > 0:
            return Projection(direction=v / nrm, source="random")


def estimated_projection(beta: np.ndarray) -> Projection:
    """Normalize a fitted coefficient vector into a direction."""
    b = np.asarray(beta, dtype=float)
    nrm = np.linalg.norm(b)
    if nrm == 0:
        raise DegenerateEstimateError("coefficient vector is identically zero")
    return Projection(direction=b / nrm, source="estimated")


def bandwidth(n: int, q_hat: int, min_q: int = MIN_Q) -> float:
    """Selected-dimension bandwidth rule h = 2 * n^(-1/(4 + q)).

    q_hat below ``min_q`` is floored to it, so an empty selected set still
    produces a usable bandwidth.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if q_hat < 0:
        raise ValueError("q_hat must be nonnegative")
    q = max(int(q_hat), min_q)
    return 2.0 * float(n) ** (-1.0 / (4.0 + q))


def gaussian_kernel(u: np.ndarray) -> np.ndarray:
    """Standard normal density, used as the smoothing kernel."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ProjectionTestResult:
    statistic: float
    p_value: float
    projection: Projection
    bandwidth: float
    degenerate: bool = False


def projected_statistic(resid: np.ndarray, proj_x: np.ndarray, h: float):
    """Standardized kernel statistic for given residuals and projected x.

    Returns (statistic, degenerate).  The off-diagonal pair sums are formed
    from the full n x n kernel matrix; memory is n^2 which is fine at the
    sample sizes this test targets.  A collapsed denominator (residuals all
    zero, or kernel mass vanishing) is flagged instead of dividing by ~0.
    """
    e = np.asarray(resid, dtype=float)
    s = np.asarray(proj_x, dtype=float)
    if e.ndim != 1 or s.ndim != 1 or e.size != s.size:
        raise ValueError("residuals and projected covariates must match in length")
    if e.size < 2:
        raise ValueError("need at least two observations")
    if h <= 0:
        raise ValueError("bandwidth must be positive")

    K = gaussian_kernel((s[:, None] - s[None, :]) / h)
    np.fill_diagonal(K, 0.0)
    num = e @ K @ e
    e2 = e * e
    denom_sq = 2.0 * (e2 @ (K * K) @ e2)
    if denom_sq < 1e-24:
        return 0.0, True
    return float(num / math.sqrt(denom_sq)), False


def run_projection_test(
    data: Dataset,
    beta: np.ndarray,
    projection: Projection,
    q_hat: int,
    h: Optional[float] = None,
) -> ProjectionTestResult:
    """Test the fitted mean function along one projection.

    ``beta`` is the coefficient vector whose residuals are tested; ``q_hat``
    feeds the bandwidth rule (pass the selected-support size).  One-sided
    p-value: 1 - Phi(T).
    """
    if projection.direction.size != data.p:
        raise ValueError("projection dimension does not match the design")
    hh = bandwidth(data.n, q_hat) if h is None else float(h)
    if hh <= 0:
        raise ValueError("bandwidth must be positive")
    e = residuals(data, beta)
    s = data.X @ projection.direction
    stat, degenerate = projected_statistic(e, s, hh)
    if degenerate:
        warnings.warn(
            "kernel variance estimate collapsed; statistic set to 0",
            DegenerateStatisticWarning,
        )
        return ProjectionTestResult(
            statistic=0.0,
            p_value=1.0,
            projection=projection,
            bandwidth=hh,
            degenerate=True,
        )
    return ProjectionTestResult(
        statistic=stat,
        p_value=float(1.0 - ndtr(stat)),
        projection=projection,
        bandwidth=hh,
        degenerate=False,
    )


def run_battery(
    data: Dataset,
    beta: np.ndarray,
    q_hat: int,
    d_random: int,
    rng: np.random.Generator,
):
    """Estimated-direction test plus ``d_random`` random-direction tests.

    When the fitted vector is zero there is no estimated direction; an extra
    random one is substituted so the battery size stays d_random + 1, and
    the substitution is reported.  Returns (results, substituted).
    """
    if d_random < 0:
        raise ValueError("d_random must be nonnegative")
    substituted = False
    try:
        first = estimated_projection(beta)
    except DegenerateEstimateError:
        first = sample_projection(data.p, rng)
        substituted = True
    projections = [first]
    projections.extend(sample_projection(data.p, rng) for _ in range(d_random))
    results = [run_projection_test(data, beta, pr, q_hat) for pr in projections]
    return results, substituted
