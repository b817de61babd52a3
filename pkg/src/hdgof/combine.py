"""Combining dependent p-values across projections.

Two rules, both tolerant of arbitrary dependence between the inputs:

- Cauchy combination: stat = sum_i w_i * tan((1/2 - p_i) * pi), referred to
  the standard Cauchy distribution, p = 1/2 - arctan(stat)/pi.
- Harmonic mean: stat = 1 / sum_i (w_i / p_i), which is itself compared
  directly to the level (the harmonic mean of valid p-values is close to
  valid at small levels, with inflation that grows slowly in d).

Weights default to equal, w_i = 1/d.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

P_CLAMP_LO = 1e-15
P_CLAMP_HI = 1.0 - 1e-15


class ClampedPValueWarning(UserWarning):
    """An input p-value sat outside (0, 1) and was clamped."""


@dataclass(frozen=True)
class CombinedTestResult:
    statistic: float
    p_value: float
    method: str
    n_inputs: int


def default_weights(d: int) -> np.ndarray:
    """Equal weights 1/d."""
    if d < 1:
        raise ValueError("need at least one p-value")
    return np.full(d, 1.0 / d)


def _prepare(p_values, weights) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("p_values must be a nonempty 1-d array")
    if not np.all(np.isfinite(p)):
        raise ValueError("p_values must be finite")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p_values must lie in [0, 1]")
    if weights is None:
        w = default_weights(p.size)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != p.shape:
            raise ValueError("weights must match p_values in length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        tot = w.sum()
        if tot <= 0:
            raise ValueError("weights must not all be zero")
        w = w / tot
    if np.any(p <= 0) or np.any(p >= 1):
        warnings.warn(
            "input p-values at or beyond the open interval (0, 1) were clamped",
            ClampedPValueWarning,
        )
        p = np.clip(p, P_CLAMP_LO, P_CLAMP_HI)
    return p, w


def cauchy_combine(
    p_values: Sequence[float], weights: Optional[Sequence[float]] = None
) -> CombinedTestResult:
    """Weighted Cauchy combination of possibly dependent p-values."""
    p, w = _prepare(p_values, weights)
    stat = float(np.sum(w * np.tan((0.5 - p) * math.pi)))
    p_comb = 0.5 - math.atan(stat) / math.pi
    p_comb = min(max(p_comb, 0.0), 1.0)
    return CombinedTestResult(
        statistic=stat, p_value=float(p_comb), method="cauchy", n_inputs=p.size
    )


def hmp_combine(
    p_values: Sequence[float], weights: Optional[Sequence[float]] = None
) -> CombinedTestResult:
    """Weighted harmonic-mean combination of possibly dependent p-values.

    The reported p-value is the harmonic mean itself; compare it to the
    chosen level directly.  This is anti-conservative by a slowly growing
    factor in the number of inputs, so treat rejections near the boundary
    with care at moderate d.
    """
    p, w = _prepare(p_values, weights)
    hm = float(1.0 / np.sum(w / p))
    return CombinedTestResult(
        statistic=hm, p_value=min(hm, 1.0), method="hmp", n_inputs=p.size
    )
