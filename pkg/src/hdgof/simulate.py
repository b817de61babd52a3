"""Synthetic data generators and the Monte Carlo replication engine.

Two study families: Gaussian location models H11..H14 where a departure
term a*delta(X) is added to a linear signal, and Bernoulli models H21..H24
where the departure enters the logistic success probability.  a = 0 is the
null in every model.

The replication engine runs the full pipeline (penalized fit, refit,
projection battery, combination) per replication and reduces exact
rejection counts into one table cell per test.  Per-replication randomness
is derived by spawning child seed sequences off a master seed, so serial
and parallel execution produce identical results.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .combine import cauchy_combine, hmp_combine
from .glm import BERNOULLI_LOGIT, GAUSSIAN_IDENTITY, Dataset
from .lasso import PathConfig, post_lasso
from .projection import run_battery, run_projection_test, sample_projection

COV_IDENTITY = "identity"
COV_TOEPLITZ = "toeplitz"
STUDY1_MODELS = ("H11", "H12", "H13", "H14")
STUDY2_MODELS = ("H21", "H22", "H23", "H24")
TEST_NAMES = ("T_alpha", "T_betahat", "T_cauchy", "T_hmp")


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariate covariance: identity or the Toeplitz family (1/2)^|i-j|."""

    kind: str
    p: int

    def __post_init__(self):
        if self.kind not in (COV_IDENTITY, COV_TOEPLITZ):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    def matrix(self) -> np.ndarray:
        if self.kind == COV_IDENTITY:
            return np.eye(self.p)
        idx = np.arange(self.p)
        return 0.5 ** np.abs(idx[:, None] - idx[None, :])

    def cholesky(self) -> Optional[np.ndarray]:
        """Lower Cholesky factor, or None for the identity fast path."""
        if self.kind == COV_IDENTITY:
            return None
        try:
            return np.linalg.cholesky(self.matrix())
        except np.linalg.LinAlgError as exc:  # cannot happen for these kinds
            raise ValueError(f"covariance is not positive definite: {exc}")


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation configuration; a = 0 is the correctly specified null."""

    model: str
    n: int
    p: int
    a: float
    cov: CovarianceSpec
    seed: int

    def __post_init__(self):
        if self.model not in STUDY1_MODELS + STUDY2_MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.p < 5:
            raise ValueError("models place signal on the first five covariates; p >= 5")
        if self.cov.p != self.p:
            raise ValueError("covariance dimension must match p")

    @property
    def study(self) -> int:
        return 1 if self.model in STUDY1_MODELS else 2

    @property
    def family_kind(self) -> str:
        return "gaussian" if self.study == 1 else "bernoulli"


def make_scenario(model, n, p, a, cov_kind, seed) -> ScenarioSpec:
    return ScenarioSpec(
        model=str(model),
        n=int(n),
        p=int(p),
        a=float(a),
        cov=CovarianceSpec(kind=str(cov_kind), p=int(p)),
        seed=int(seed),
    )


@dataclass(frozen=True)
class PowerTableCell:
    """Empirical rejection rate of one test under one scenario.

    ``n_reps`` counts the replications that completed and enter the rate,
    so rejection_rate * n_reps is an exact integer; ``n_failed`` counts
    replications excluded by errors (singular refit, separation, ...).
    """

    scenario: ScenarioSpec
    test_name: str
    rejection_rate: float
    n_reps: int
    level: float
    n_failed: int = 0


@dataclass(frozen=True)
class ReplicationRecord:
    """Raw per-replication outcomes, mainly for diagnostics and tests."""

    t_alpha: float
    p_alpha: float
    t_betahat: float
    p_betahat: float
    p_cauchy: float
    p_hmp: float
    q_hat: int
    substituted: bool
    failed: bool = False
    error: Optional[str] = None


def sample_mvn(n: int, cov: CovarianceSpec, rng: np.random.Generator) -> np.ndarray:
    """n iid rows from N(0, cov) via the Cholesky factor."""
    if n < 1:
        raise ValueError("n must be >= 1")
    Z = rng.standard_normal((n, cov.p))
    L = cov.cholesky()
    return Z if L is None else Z @ L.T


def _beta0_study1(p: int) -> np.ndarray:
    b = np.zeros(p)
    b[:5] = 1.0
    return b / math.sqrt(5.0)


def selected_p1(n: int, p: int) -> int:
    """p1 = min(p, floor(2 n^(1/3))) for the dense-direction models."""
    # epsilon guards cube roots that land just under an integer in floats
    return min(p, int(math.floor(2.0 * n ** (1.0 / 3.0) + 1e-9)))


def _beta1_study1(n: int, p: int) -> np.ndarray:
    p1 = selected_p1(n, p)
    b = np.zeros(p)
    b[:p1] = 1.0
    return b / math.sqrt(p1)


def generate_study1(spec: ScenarioSpec, rng: np.random.Generator) -> Dataset:
    """Gaussian models: Y = b0'X + a*delta(X) + eps, eps ~ N(0,1).

    delta is exp(-(b0'X)^2) for H11, cos(0.6*pi*b0'X) for H12, (b1'X)^2 for
    H13 and exp(b1'X) for H14, with b0 = (1,1,1,1,1,0,...)/sqrt(5) and b1
    spreading mass over the first p1 coordinates.
    """
    if spec.model not in STUDY1_MODELS:
        raise ValueError(f"{spec.model} is not a Gaussian-study model")
    X = sample_mvn(spec.n, spec.cov, rng)
    b0 = _beta0_study1(spec.p)
    z0 = X @ b0
    if spec.model == "H11":
        delta = np.exp(-z0 * z0)
    elif spec.model == "H12":
        delta = np.cos(0.6 * math.pi * z0)
    else:
        z1 = X @ _beta1_study1(spec.n, spec.p)
        delta = z1 * z1 if spec.model == "H13" else np.exp(z1)
    eps = rng.standard_normal(spec.n)
    y = z0 + spec.a * delta + eps
    return Dataset(X=X, y=y, family=GAUSSIAN_IDENTITY)


def generate_study2(spec: ScenarioSpec, rng: np.random.Generator) -> Dataset:
    """Bernoulli models: Y|X ~ Bern(mu(b0'X + a*g(X))) with logistic mu.

    b0 = (1,1,1,1,1,0,...) unnormalized; g is (b0'X)^2 for H21, exp(b0'X)
    for H22, 2*x1^2 for H23 and 2*x1*x2 for H24.
    """
    if spec.model not in STUDY2_MODELS:
        raise ValueError(f"{spec.model} is not a Bernoulli-study model")
    X = sample_mvn(spec.n, spec.cov, rng)
    b0 = np.zeros(spec.p)
    b0[:5] = 1.0
    z0 = X @ b0
    if spec.model == "H21":
        g = z0 * z0
    elif spec.model == "H22":
        g = np.exp(z0)
    elif spec.model == "H23":
        g = 2.0 * X[:, 0] ** 2
    else:
        g = 2.0 * X[:, 0] * X[:, 1]
    prob = BERNOULLI_LOGIT.mu(z0 + spec.a * g)
    y = (rng.random(spec.n) < prob).astype(float)
    return Dataset(X=X, y=y, family=BERNOULLI_LOGIT)


def generate_dataset(spec: ScenarioSpec, rng: np.random.Generator) -> Dataset:
    if spec.study == 1:
        return generate_study1(spec, rng)
    return generate_study2(spec, rng)


def run_single_replication(
    spec: ScenarioSpec, d_random: int, rep_seed: np.random.SeedSequence
) -> ReplicationRecord:
    """One full pipeline pass: generate, fit, test, combine.

    Three independent child streams drive data generation, CV fold
    assignment, and projection draws, so e.g. changing d_random does not
    perturb the generated data.  Errors are captured into the record.
    """
    data_ss, cv_ss, proj_ss = rep_seed.spawn(3)
    try:
        data = generate_dataset(spec, np.random.default_rng(data_ss))
        cfg = PathConfig(seed=int(cv_ss.generate_state(1)[0]))
        fit = post_lasso(data, cfg)
        proj_rng = np.random.default_rng(proj_ss)
        alpha = sample_projection(spec.p, proj_rng)
        standalone = run_projection_test(data, fit.beta, alpha, fit.q_hat)
        battery, substituted = run_battery(
            data, fit.beta, fit.q_hat, d_random, proj_rng
        )
        pvals = [r.p_value for r in battery]
        return ReplicationRecord(
            t_alpha=standalone.statistic,
            p_alpha=standalone.p_value,
            t_betahat=battery[0].statistic,
            p_betahat=battery[0].p_value,
            p_cauchy=cauchy_combine(pvals).p_value,
            p_hmp=hmp_combine(pvals).p_value,
            q_hat=fit.q_hat,
            substituted=substituted,
        )
    except Exception as exc:
        return ReplicationRecord(
            t_alpha=math.nan,
            p_alpha=math.nan,
            t_betahat=math.nan,
            p_betahat=math.nan,
            p_cauchy=math.nan,
            p_hmp=math.nan,
            q_hat=-1,
            substituted=False,
            failed=True,
            error=f"{type(exc).__name__}: {exc}",
        )


def _replication_task(args):
    spec, d_random, rep_seed = args
    return run_single_replication(spec, d_random, rep_seed)


def _resolve_workers(n_workers: Optional[int], n_reps: int) -> int:
    if n_workers is None:
        raw = os.environ.get("HDGOF_THREADS", "0")
        try:
            n_workers = int(raw)
        except ValueError:
            raise ValueError(f"HDGOF_THREADS must be an integer, got {raw!r}")
    if n_workers < 0:
        raise ValueError("worker count must be nonnegative")
    if n_workers == 0:
        n_workers = os.cpu_count() or 1
    return max(1, min(n_workers, n_reps))


def run_replications(
    spec: ScenarioSpec,
    n_reps: int,
    d_random: int = 10,
    level: float = 0.05,
    seed: Optional[int] = None,
    n_workers: Optional[int] = None,
    return_records: bool = False,
):
    """Monte Carlo rejection rates for the four tests under one scenario.

    Returns the four PowerTableCell rows in the order T_alpha, T_betahat,
    T_cauchy, T_hmp (with return_records=True, a (cells, records) pair).
    The master seed defaults to spec.seed; HDGOF_THREADS caps workers when
    n_workers is None (0 means one worker per available core).  Failed
    replications are excluded from the rates and counted in n_failed.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    if d_random < 1:
        raise ValueError("d_random must be >= 1")
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")

    master = np.random.SeedSequence(spec.seed if seed is None else seed)
    tasks = [(spec, d_random, ss) for ss in master.spawn(n_reps)]

    workers = _resolve_workers(n_workers, n_reps)
    if workers == 1:
        records = [_replication_task(t) for t in tasks]
    else:
        chunk = max(1, n_reps // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replication_task, tasks, chunksize=chunk))

    ok = [r for r in records if not r.failed]
    n_failed = n_reps - len(ok)
    if not ok:
        raise RuntimeError(
            f"all {n_reps} replications failed; first error: {records[0].error}"
        )
    counts = {
        "T_alpha": sum(r.p_alpha <= level for r in ok),
        "T_betahat": sum(r.p_betahat <= level for r in ok),
        "T_cauchy": sum(r.p_cauchy <= level for r in ok),
        "T_hmp": sum(r.p_hmp <= level for r in ok),
    }
    cells = [
        PowerTableCell(
            scenario=spec,
            test_name=name,
            rejection_rate=counts[name] / len(ok),
            n_reps=len(ok),
            level=level,
            n_failed=n_failed,
        )
        for name in TEST_NAMES
    ]
    if return_records:
        return cells, records
    return cells
