"""GLM families, datasets, residuals, and unpenalized refitting on small supports.

Two families are supported: Gaussian with identity link and Bernoulli with
logit link.  No intercept is ever added implicitly; callers that want one
must append a constant column themselves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"

# IRLS refit settings: tolerance on the max coefficient change per iteration.
IRLS_TOL = 1e-8
IRLS_MAX_ITER = 100
SEPARATION_NORM = 1e6


class SingularDesignError(ValueError):
    """Restricted design matrix is rank deficient."""


class SeparationWarning(UserWarning):
    """Logistic MLE diverged, indicating complete or quasi separation."""


@dataclass(frozen=True)
class GlmFamily:
    """Inverse link mu and its derivative for one GLM family.

    ``mu`` is monotone nondecreasing for both supported families; for the
    Bernoulli-logit family mu(z) lies in (0, 1) with mu(0) = 1/2.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, BERNOULLI):
            raise ValueError(f"unknown family kind: {self.kind!r}")

    def mu(self, z):
        """Inverse link applied elementwise."""
        z = np.asarray(z, dtype=float)
        if self.kind == GAUSSIAN:
            return z
        # numerically stable logistic sigmoid
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out

    def mu_prime(self, z):
        """Derivative of the inverse link, elementwise."""
        z = np.asarray(z, dtype=float)
        if self.kind == GAUSSIAN:
            return np.ones_like(z)
        m = self.mu(z)
        return m * (1.0 - m)


GAUSSIAN_IDENTITY = GlmFamily(GAUSSIAN)
BERNOULLI_LOGIT = GlmFamily(BERNOULLI)


def family_from_name(name: str) -> GlmFamily:
    name = name.strip().lower()
    if name in (GAUSSIAN, "normal"):
        return GAUSSIAN_IDENTITY
    if name in (BERNOULLI, "logistic", "binomial"):
        return BERNOULLI_LOGIT
    raise ValueError(f"unknown family {name!r}; expected 'gaussian' or 'bernoulli'")


@dataclass(frozen=True)
class Dataset:
    """An (X, y) regression sample together with its GLM family.

    Invariants checked at construction: X is n x p with n >= 2 and p >= 1,
    all entries finite, and for the Bernoulli family y takes values in {0, 1}.
    """

    X: np.ndarray
    y: np.ndarray
    family: GlmFamily = field(default=GAUSSIAN_IDENTITY)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, p = X.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ValueError(f"y has length {y.shape[0]}, expected {n}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("non-finite entries in X or y")
        if self.family.kind == BERNOULLI and not np.all((y == 0) | (y == 1)):
            raise ValueError("Bernoulli family requires y in {0, 1}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def linear_predictor(X: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Return X @ beta, validating shapes."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise ValueError(
            f"dimension mismatch: X is {X.shape}, beta has length {beta.shape[0]}"
        )
    return X @ beta


def residuals(data: Dataset, beta: np.ndarray) -> np.ndarray:
    """Raw residuals y - mu(X beta)."""
    return data.y - data.family.mu(linear_predictor(data.X, beta))


def mle_refit(data: Dataset, support) -> np.ndarray:
    """Unpenalized ML refit restricted to ``support``; zero elsewhere.

    Gaussian: exact least squares on the restricted design.  Bernoulli:
    logistic maximum likelihood by IRLS, converged to a max coefficient
    change <= 1e-8 or 100 iterations.  The restricted design must have full
    column rank.  If the logistic coefficients diverge (norm > 1e6, complete
    separation) a SeparationWarning is issued and the last iterate returned.

    Returns a length-p vector.
    """
    support = np.asarray(sorted(set(int(j) for j in np.atleast_1d(support))), dtype=int)
    beta = np.zeros(data.p)
    k = support.size
    if k == 0:
        return beta
    if np.any(support < 0) or np.any(support >= data.p):
        raise ValueError("support indices out of range")
    if k >= data.n:
        raise ValueError(f"support size {k} must be < n = {data.n}")

    Xs = data.X[:, support]
    if np.linalg.matrix_rank(Xs) < k:
        raise SingularDesignError(f"restricted design has rank < {k}")

    if data.family.kind == GAUSSIAN:
        coef, *_ = np.linalg.lstsq(Xs, data.y, rcond=None)
        beta[support] = coef
        return beta

    # logistic IRLS
    coef = np.zeros(k)
    for _ in range(IRLS_MAX_ITER):
        eta = Xs @ coef
        m = data.family.mu(eta)
        w = np.maximum(m * (1.0 - m), 1e-10)
        z = eta + (data.y - m) / w
        Xw = Xs * w[:, None]
        try:
            coef_new = np.linalg.solve(Xs.T @ Xw, Xw.T @ z)
        except np.linalg.LinAlgError as exc:
            raise SingularDesignError("weighted design became singular") from exc
        step = np.max(np.abs(coef_new - coef))
        coef = coef_new
        if np.linalg.norm(coef) > SEPARATION_NORM:
            warnings.warn(
                "logistic refit diverged (complete separation suspected); "
                "returning last iterate",
                SeparationWarning,
            )
            break
        if step <= IRLS_TOL:
            break
    beta[support] = coef
    return beta
