"""Robustness radius toolkit.

Quantifies the robustness of a main regression estimate against a fixed set
of robustness checks: the smallest maximum-deviation band that survives a
conditional chi-square moment-inequality test, together with the estimation
pipeline (per-specification partialled-out fits, trimmed bootstrap
covariance), a sensitivity-parameter mapping, and a Monte Carlo lab.
"""

from ._solver import BACKEND as QP_BACKEND
from .covariance import (
    BootstrapConfig,
    CovarianceEstimate,
    auto_trim_threshold,
    bootstrap_cov,
    plugin_cov_iid,
)
from .cstest import (
    InequalitySystem,
    TestOutcome,
    build_system,
    cc_test,
    chi2_quantile,
    count_active,
    project_qp,
    rcc_test,
)
from .datamodel import (
    Dataset,
    Specification,
    SubsampleMask,
    build_mask,
    subsample_share,
)
from .radius import RadiusReport, lu_white_full_robustness, robustness_radius
from .regress import (
    EstimateBundle,
    FwlFit,
    fit_fwl,
    fit_study,
    medium_stats,
    stack_estimates,
)
from .sensitivity import SensitivityInputs, bias_from_tau, tau_from_radius
from .simlab import Scenario, SimSummary, parameter_structures, run_scenario, table1

__version__ = "0.1.0"

__all__ = [
    "QP_BACKEND",
    "BootstrapConfig",
    "CovarianceEstimate",
    "auto_trim_threshold",
    "bootstrap_cov",
    "plugin_cov_iid",
    "InequalitySystem",
    "TestOutcome",
    "build_system",
    "cc_test",
    "chi2_quantile",
    "count_active",
    "project_qp",
    "rcc_test",
    "Dataset",
    "Specification",
    "SubsampleMask",
    "build_mask",
    "subsample_share",
    "RadiusReport",
    "lu_white_full_robustness",
    "robustness_radius",
    "EstimateBundle",
    "FwlFit",
    "fit_fwl",
    "fit_study",
    "medium_stats",
    "stack_estimates",
    "SensitivityInputs",
    "bias_from_tau",
    "tau_from_radius",
    "Scenario",
    "SimSummary",
    "parameter_structures",
    "run_scenario",
    "table1",
    "__version__",
]
