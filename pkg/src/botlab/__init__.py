"""Bearings-only tracking estimation laboratory."""
from .exceptions import BotlabError, ConfigurationError, ObservabilityError, SingularGeometryError
from .geometry import (
    ObserverPath,
    TrajectoryModel,
    bearing,
    bearing_residual,
    build_observer_path,
    eval_trajectory,
    grad_theta_bearing,
    hess_theta_bearing,
    observer_position,
    polynomial_model,
    uniform_linear_model,
    validate_scenario,
)
from .noise import (
    AR1,
    AnisotropicGaussian,
    IsotropicGaussian,
    NoTrajectoryNoise,
    ObservationNoiseSpec,
    ar1_autocovariance,
    sample_trajectory_noise,
    second_moment,
)
from .quadrature import QuadratureRule, gauss_hermite
from .optimize import EstimateResult, OptimizerConfig, nelder_mead
from .sim import Dataset, Scenario, simulate
from .estimate import criterion_Mn, lse, loglik_Jn, marginal_density, mle
from .inference import (
    ConfidenceReport,
    InfoMatrices,
    check_mean_preservation,
    confidence_intervals,
    conservative_A2,
    conservative_intervals,
    info_IPsi,
    info_IR,
    lse_asymptotic_cov,
    parametric_fisher,
)
from .dependence import clt_experiment, long_run_variance
from .harness import MonteCarloSummary, coverage_study, run_montecarlo, summarize
from .estimators import BearingsLSE, BearingsMLE

__version__ = "0.1.0"
