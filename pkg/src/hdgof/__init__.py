"""Goodness-of-fit testing for generalized linear models via random
projections, with a penalized-estimation front end for p >> n designs."""

from .combine import CombinedTestResult, cauchy_combine, default_weights, hmp_combine
from .glm import (
    BERNOULLI_LOGIT,
    GAUSSIAN_IDENTITY,
    Dataset,
    GlmFamily,
    SeparationWarning,
    SingularDesignError,
    family_from_name,
    linear_predictor,
    mle_refit,
    residuals,
)
from .lasso import (
    ConvergenceWarning,
    PathConfig,
    SparseFit,
    lambda_grid,
    lambda_max,
    lasso_fit,
    post_lasso,
    select_lambda_cv,
    soft_threshold,
)
from .projection import (
    DegenerateEstimateError,
    Projection,
    ProjectionTestResult,
    bandwidth,
    estimated_projection,
    gaussian_kernel,
    projected_statistic,
    run_battery,
    run_projection_test,
    sample_projection,
)
from .simulate import (
    CovarianceSpec,
    PowerTableCell,
    ReplicationRecord,
    ScenarioSpec,
    generate_study1,
    generate_study2,
    make_scenario,
    run_replications,
    run_single_replication,
    sample_mvn,
)

__version__ = "0.1.0"

__all__ = [
    "BERNOULLI_LOGIT",
    "GAUSSIAN_IDENTITY",
    "CombinedTestResult",
    "ConvergenceWarning",
    "CovarianceSpec",
    "Dataset",
    "DegenerateEstimateError",
    "GlmFamily",
    "PathConfig",
    "PowerTableCell",
    "Projection",
    "ProjectionTestResult",
    "ReplicationRecord",
    "ScenarioSpec",
    "SeparationWarning",
    "SingularDesignError",
    "SparseFit",
    "bandwidth",
    "cauchy_combine",
    "default_weights",
    "estimated_projection",
    "family_from_name",
    "gaussian_kernel",
    "generate_study1",
    "generate_study2",
    "hmp_combine",
    "lambda_grid",
    "lambda_max",
    "lasso_fit",
    "linear_predictor",
    "make_scenario",
    "mle_refit",
    "post_lasso",
    "projected_statistic",
    "residuals",
    "run_battery",
    "run_projection_test",
    "run_replications",
    "run_single_replication",
    "sample_mvn",
    "sample_projection",
    "select_lambda_cv",
    "soft_threshold",
]
