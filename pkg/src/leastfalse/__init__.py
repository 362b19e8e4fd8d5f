"""Binary regression under misspecification: least false parameters, sandwich inference and simulation."""

from ._linalg import SingularInformationError
from .core import Dataset, DatasetError, DimensionError, Link, inverse_link, read_csv, write_csv
from .distributions import (
    FiniteSupport,
    IndicatorWeight,
    KernelWeight,
    LogisticInFeatures,
    MixtureRatio,
    ProductBeta,
    ProductGaussian,
    ProductUniform,
    StepFunction,
    Tabulated,
    TwoClassMixture,
    piecewise_logistic,
)
from .fit import (
    FitConfig,
    FitError,
    FitResult,
    FitStatus,
    Kernel,
    KernelSpec,
    PriorSpec,
    fit_bayes_posterior_mean,
    fit_local,
    fit_mle,
    local_probability_curve,
)
from .likelihood import information_matrix, log_likelihood, score
from .nonparam import DensityEstimate, DensityKernel, density_ratio_from_data, density_ratio_probability, kde_evaluate
from .oracle import LeastFalseResult, OracleDivergenceError, delta_distance, least_false, population_J_K
from .sandwich import CovarianceReport, GofReport, covariance_report, misspecification_test, wald_interval
from .simulation import ReplicationSummary, Scenario, run_experiment

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
