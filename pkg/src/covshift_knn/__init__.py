"""Local k-nearest-neighbour regression under covariate shift.

Exact neighbour search, k-NN density estimates, standard and locally adaptive
k-NN regressors (one- and two-sample), design diagnostics, and a Monte Carlo
harness that fits empirical risk exponents.
"""

from .density import DensityEstimator, estimate_density, recommended_ell
from .diagnostics import (
    DiagnosticReport,
    MassPropertyConstants,
    Verdict,
    check_dre_numeric,
    check_mass_properties,
    check_pseudo_moment,
    dre_threshold,
    tail_functional,
)
from .distributions import Empirical, Exponential, Gaussian, Pareto, Uniform
from .estimators import (
    LabeledDataset,
    LocalAdaptiveK,
    OneSampleRegressor,
    TwoSampleRegressor,
    local_neighbor_count,
    local_regressor,
    predict_one_sample,
    predict_two_sample,
    standard_regressor,
)
from .neighbors import NeighborIndex, PointCloud, build_index, k_nearest, linear_scan
from .risk import (
    ConstantFunction,
    Cusp,
    EstimatorConfig,
    GaussianNoise,
    LaplaceNoise,
    RegressionTask,
    RiskCurve,
    Setting,
    excess_risk_mc,
    fit_rate,
    generate_labeled,
    run_rate_experiment,
    simulate,
    Sine,
    theoretical_rate,
)

__all__ = [
    "DensityEstimator",
    "estimate_density",
    "recommended_ell",
    "DiagnosticReport",
    "MassPropertyConstants",
    "Verdict",
    "check_dre_numeric",
    "check_mass_properties",
    "check_pseudo_moment",
    "dre_threshold",
    "tail_functional",
    "Empirical",
    "Exponential",
    "Gaussian",
    "Pareto",
    "Uniform",
    "LabeledDataset",
    "LocalAdaptiveK",
    "OneSampleRegressor",
    "TwoSampleRegressor",
    "local_neighbor_count",
    "local_regressor",
    "predict_one_sample",
    "predict_two_sample",
    "standard_regressor",
    "NeighborIndex",
    "PointCloud",
    "build_index",
    "k_nearest",
    "linear_scan",
    "ConstantFunction",
    "Cusp",
    "EstimatorConfig",
    "GaussianNoise",
    "LaplaceNoise",
    "RegressionTask",
    "RiskCurve",
    "Setting",
    "excess_risk_mc",
    "fit_rate",
    "generate_labeled",
    "run_rate_experiment",
    "simulate",
    "Sine",
    "theoretical_rate",
]

__version__ = "0.1.0"
