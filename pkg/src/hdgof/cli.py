"""Command-line front end: CSV ingestion, model checking on real data, and
simulation sweeps, with plain-text or json-lines output.

Four commands share one flag namespace (unused flags are ignored by the
others):

- fit       penalized fit with post-selection refit; prints coefficients
- test      the full model check: battery of projection tests + combiners
- simulate  Monte Carlo size/power table for one scenario over a grid of a
- sonar     100-split train/test accuracy comparison, linear vs quadratic

A statistical rejection is ordinary output, never a nonzero exit status.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .combine import cauchy_combine, hmp_combine
from .glm import BERNOULLI, Dataset, family_from_name
from .lasso import PathConfig, post_lasso
from .projection import run_battery, run_projection_test, sample_projection
from .simulate import make_scenario, run_replications

FORMAT_TEXT = "text"
FORMAT_JSONL = "json-lines"


@dataclass(frozen=True)
class RunConfig:
    """Parsed command-line options."""

    command: str
    input_path: Optional[str] = None
    response_column: str = "y"
    family: str = "gaussian"
    d_random: int = 10
    seed: int = 0
    level: float = 0.05
    standardize: bool = False
    add_intercept: bool = False
    quadratic: bool = False
    n_reps: int = 500
    model: str = "H11"
    n: int = 200
    p: int = 100
    a: str = "0"
    cov: str = "identity"
    output_format: str = FORMAT_TEXT

    def __post_init__(self):
        if not (0.0 < self.level < 1.0):
            raise ValueError("level must be in (0, 1)")
        if self.d_random < 0:
            raise ValueError("d-random must be nonnegative")
        if self.output_format not in (FORMAT_TEXT, FORMAT_JSONL):
            raise ValueError(f"unknown format {self.output_format!r}")

    def a_values(self) -> list[float]:
        try:
            return [float(s) for s in self.a.split(",") if s.strip() != ""]
        except ValueError:
            raise ValueError(f"could not parse --a {self.a!r} as comma-separated reals")


def _read_table(path: str):
    """Header and float matrix from a comma-separated file.

    Bad cells are reported by data row (1-based, header excluded) and
    column name.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: file is empty")
        header = [h.strip() for h in header]
        rows = []
        for i, row in enumerate(reader, start=1):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: row {i} has {len(row)} fields, header has {len(header)}"
                )
            vals = []
            for name, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric value {cell.strip()!r} "
                        f"at row {i}, column {name!r}"
                    )
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def _response_index(header: Sequence[str], response_column: str) -> int:
    if response_column in header:
        return header.index(response_column)
    try:
        idx = int(response_column)
    except ValueError:
        raise ValueError(
            f"response column {response_column!r} not found; "
            f"available: {', '.join(header)}"
        )
    if not (0 <= idx < len(header)):
        raise ValueError(f"response column index {idx} out of range for {len(header)} columns")
    return idx


def load_csv(path: str, response_column: str, family: str) -> Dataset:
    """Read a headered numeric CSV and split out the response column."""
    data, _ = _load_features(path, response_column, family)
    return data


def _load_features(path: str, response_column: str, family: str):
    header, mat = _read_table(path)
    if len(header) < 2:
        raise ValueError(f"{path}: need a response column and at least one covariate")
    ridx = _response_index(header, response_column)
    y = mat[:, ridx]
    X = np.delete(mat, ridx, axis=1)
    names = [h for i, h in enumerate(header) if i != ridx]
    fam = family_from_name(family)
    return Dataset(X=X, y=y, family=fam), names


def _standardize_columns(X: np.ndarray) -> np.ndarray:
    mean = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)  # constant column becomes all zeros
    return (X - mean) / sd


def build_features(X, names, standardize: bool, quadratic: bool, add_intercept: bool):
    """Feature pipeline: standardize, append squares, append intercept.

    Order matters and is fixed: squares are squares of the standardized
    values and are then standardized themselves; the intercept column of
    ones is appended last and never rescaled.
    """
    Z = X.copy()
    names = list(names)
    if standardize:
        Z = _standardize_columns(Z)
    if quadratic:
        sq = Z * Z
        if standardize:
            sq = _standardize_columns(sq)
        Z = np.hstack([Z, sq])
        names = names + [f"{nm}^2" for nm in names]
    if add_intercept:
        Z = np.hstack([Z, np.ones((Z.shape[0], 1))])
        names = names + ["(intercept)"]
    return Z, names


def _emit(line: str):
    sys.stdout.write(line + "\n")


def _jdump(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


def _scenario_dict(spec) -> dict:
    return {
        "model": spec.model,
        "n": spec.n,
        "p": spec.p,
        "a": spec.a,
        "cov": {"kind": spec.cov.kind, "p": spec.cov.p},
        "seed": spec.seed,
    }


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.input_path is None:
        raise ValueError("fit requires --input")
    data, names = _load_features(cfg.input_path, cfg.response_column, cfg.family)
    Z, names = build_features(
        data.X, names, cfg.standardize, cfg.quadratic, cfg.add_intercept
    )
    data = Dataset(X=Z, y=data.y, family=data.family)
    fit = post_lasso(data, PathConfig(seed=cfg.seed))
    if cfg.output_format == FORMAT_JSONL:
        _emit(
            _jdump(
                {
                    "n": data.n,
                    "p": data.p,
                    "beta": list(fit.beta),
                    "support": [int(j) for j in fit.support],
                    "lam": fit.lam,
                    "n_iter": fit.n_iter,
                    "converged": fit.converged,
                    "refit_fallback": fit.refit_fallback,
                }
            )
        )
        return 0
    _emit(f"loaded {cfg.input_path}: n={data.n} p={data.p} family={data.family.kind}")
    _emit(f"selected lambda: {fit.lam:.6g}   support size: {fit.q_hat}")
    if fit.refit_fallback:
        _emit("note: refit not possible; reporting penalized coefficients")
    for j in fit.support:
        _emit(f"  {names[j]:>16s}  {fit.beta[j]: .6f}")
    if fit.q_hat == 0:
        _emit("  (no covariate selected; all coefficients zero)")
    return 0


def cmd_test(cfg: RunConfig) -> int:
    if cfg.input_path is None:
        raise ValueError("test requires --input")
    if cfg.d_random < 1:
        raise ValueError("test requires --d-random >= 1")
    data, names = _load_features(cfg.input_path, cfg.response_column, cfg.family)
    Z, names = build_features(
        data.X, names, cfg.standardize, cfg.quadratic, cfg.add_intercept
    )
    data = Dataset(X=Z, y=data.y, family=data.family)

    fit = post_lasso(data, PathConfig(seed=cfg.seed))
    rng = np.random.default_rng(cfg.seed)
    alpha = sample_projection(data.p, rng)
    standalone = run_projection_test(data, fit.beta, alpha, fit.q_hat)
    battery, substituted = run_battery(data, fit.beta, fit.q_hat, cfg.d_random, rng)
    pvals = [r.p_value for r in battery]
    cau = cauchy_combine(pvals)
    hmp = hmp_combine(pvals)

    headline = [
        ("T_alpha", standalone.statistic, standalone.p_value),
        ("T_betahat", battery[0].statistic, battery[0].p_value),
        ("T_cauchy", cau.statistic, cau.p_value),
        ("T_hmp", hmp.statistic, hmp.p_value),
    ]
    if cfg.output_format == FORMAT_JSONL:
        for i, r in enumerate([standalone] + battery):
            _emit(
                _jdump(
                    {
                        "projection": i,
                        "source": r.projection.source,
                        "statistic": r.statistic,
                        "p_value": r.p_value,
                        "bandwidth": r.bandwidth,
                        "degenerate": r.degenerate,
                    }
                )
            )
        for name, stat, p in headline:
            _emit(
                _jdump(
                    {
                        "test_name": name,
                        "statistic": stat,
                        "p_value": p,
                        "level": cfg.level,
                        "reject": bool(p <= cfg.level),
                    }
                )
            )
        return 0

    _emit(f"loaded {cfg.input_path}: n={data.n} p={data.p} family={data.family.kind}")
    _emit(
        f"post-selection fit: lambda={fit.lam:.6g} support={fit.q_hat}"
        + ("  [refit fallback]" if fit.refit_fallback else "")
    )
    if substituted:
        _emit("note: zero coefficient vector; estimated direction replaced by a random one")
    _emit("projection tests:")
    for i, r in enumerate([standalone] + battery):
        _emit(
            f"  [{i:2d}] {r.projection.source:>9s}  T = {r.statistic: 8.4f}"
            f"   p = {r.p_value:.4f}"
        )
    _emit(f"combined and headline tests (level {cfg.level}):")
    for name, stat, p in headline:
        verdict = "REJECT" if p <= cfg.level else "fail to reject"
        _emit(f"  {name:>9s}  stat = {stat: 10.4f}   p = {p:.4f}   -> {verdict}")
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    a_vals = cfg.a_values()
    if not a_vals:
        raise ValueError("simulate requires at least one value in --a")
    if cfg.n_reps < 1:
        raise ValueError("simulate requires --n-reps >= 1")
    text = cfg.output_format == FORMAT_TEXT
    if text:
        _emit(
            f"model {cfg.model}  n {cfg.n}  p {cfg.p}  cov {cfg.cov}  "
            f"reps {cfg.n_reps}  level {cfg.level}  seed {cfg.seed}"
        )
        _emit(
            f"{'a':>8s} {'T_alpha':>10s} {'T_betahat':>10s} "
            f"{'T_cauchy':>10s} {'T_hmp':>10s} {'failed':>8s}"
        )
    for a in a_vals:
        spec = make_scenario(cfg.model, cfg.n, cfg.p, a, cfg.cov, cfg.seed)
        cells = run_replications(
            spec, cfg.n_reps, d_random=max(1, cfg.d_random), level=cfg.level
        )
        if text:
            rates = {c.test_name: c.rejection_rate for c in cells}
            _emit(
                f"{a:8.3f} {rates['T_alpha']:10.3f} {rates['T_betahat']:10.3f} "
                f"{rates['T_cauchy']:10.3f} {rates['T_hmp']:10.3f} "
                f"{cells[0].n_failed:8d}"
            )
        else:
            for c in cells:
                _emit(
                    _jdump(
                        {
                            "scenario": _scenario_dict(c.scenario),
                            "test_name": c.test_name,
                            "rejection_rate": c.rejection_rate,
                            "n_reps": c.n_reps,
                            "level": c.level,
                            "n_failed": c.n_failed,
                        }
                    )
                )
    return 0


def _accuracy(train: Dataset, test_X: np.ndarray, test_y: np.ndarray, seed: int) -> float:
    fit = post_lasso(train, PathConfig(seed=seed))
    prob = train.family.mu(test_X @ fit.beta)
    pred = (prob >= 0.5).astype(float)
    return float(np.mean(pred == test_y))


def cmd_sonar_accuracy(cfg: RunConfig, n_runs: int = 100) -> int:
    """Repeated 80/20 accuracy comparison of linear vs quadratic features.

    The full feature matrix is standardized once; each run reshuffles the
    rows, trains both logistic models on floor(0.8 n) rows and scores the
    rest.  Reports mean accuracies over the runs.
    """
    if cfg.input_path is None:
        raise ValueError("sonar requires --input")
    data, names = _load_features(cfg.input_path, cfg.response_column, BERNOULLI)
    lin_X, _ = build_features(data.X, names, True, False, False)
    quad_X, _ = build_features(data.X, names, True, True, False)

    n = data.n
    n_train = int(math.floor(0.8 * n))
    if n_train < 2 or n - n_train < 1:
        raise ValueError("dataset too small for an 80/20 split")
    rng = np.random.default_rng(cfg.seed)
    cv_seeds = np.random.SeedSequence(cfg.seed).spawn(n_runs)

    acc_lin = np.empty(n_runs)
    acc_quad = np.empty(n_runs)
    for r in range(n_runs):
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        seed_r = int(cv_seeds[r].generate_state(1)[0])
        acc_lin[r] = _accuracy(
            Dataset(X=lin_X[tr], y=data.y[tr], family=data.family),
            lin_X[te], data.y[te], seed_r,
        )
        acc_quad[r] = _accuracy(
            Dataset(X=quad_X[tr], y=data.y[tr], family=data.family),
            quad_X[te], data.y[te], seed_r,
        )

    if cfg.output_format == FORMAT_JSONL:
        for label, acc in (("linear", acc_lin), ("quadratic", acc_quad)):
            _emit(
                _jdump(
                    {
                        "model": label,
                        "mean_accuracy": float(acc.mean()),
                        "n_runs": n_runs,
                        "n_train": n_train,
                        "n_test": n - n_train,
                        "seed": cfg.seed,
                    }
                )
            )
        return 0
    _emit(f"loaded {cfg.input_path}: n={n} p={data.p}")
    _emit(f"{n_runs} splits, train {n_train} / test {n - n_train}")
    _emit(f"mean test accuracy, linear features:    {acc_lin.mean():.4f}")
    _emit(f"mean test accuracy, + squared features: {acc_quad.mean():.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hdgof",
        description="Projection-based goodness-of-fit testing for "
        "(possibly high-dimensional) generalized linear models.",
    )
    ap.add_argument("--command", required=True, choices=["fit", "test", "simulate", "sonar"])
    ap.add_argument("--input", dest="input_path", default=None, help="CSV file with header row")
    ap.add_argument("--response", dest="response_column", default="y",
                    help="response column name or 0-based index (default: y)")
    ap.add_argument("--family", default="gaussian", help="gaussian or bernoulli (default: gaussian)")
    ap.add_argument("--d-random", dest="d_random", type=int, default=10,
                    help="number of random projections in the battery (default: 10)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--level", type=float, default=0.05, help="test level (default: 0.05)")
    ap.add_argument("--standardize", action="store_true",
                    help="center and scale each covariate column")
    ap.add_argument("--intercept", dest="add_intercept", action="store_true",
                    help="append a column of ones")
    ap.add_argument("--quadratic", action="store_true",
                    help="append squared covariate columns")
    ap.add_argument("--n-reps", dest="n_reps", type=int, default=500,
                    help="simulate: replications per scenario (default: 500)")
    ap.add_argument("--model", default="H11", help="simulate: H11..H14 or H21..H24")
    ap.add_argument("--n", type=int, default=200, help="simulate: sample size")
    ap.add_argument("--p", type=int, default=100, help="simulate: dimension")
    ap.add_argument("--a", default="0", help="simulate: departure magnitudes, comma-separated")
    ap.add_argument("--cov", default="identity", choices=["identity", "toeplitz"],
                    help="simulate: covariate covariance")
    ap.add_argument("--format", dest="output_format", default=FORMAT_TEXT,
                    choices=[FORMAT_TEXT, FORMAT_JSONL])
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(command=args.command, **{
            k: v for k, v in vars(args).items() if k != "command"
        })
        if cfg.command == "fit":
            return cmd_fit(cfg)
        if cfg.command == "test":
            return cmd_test(cfg)
        if cfg.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_sonar_accuracy(cfg)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
