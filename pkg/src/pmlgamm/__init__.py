"""Additive mixed models by penalized quadrature marginal likelihood.

The package fits grouped data with smooth covariate effects and a
per-group random intercept three ways: a dependence-ignoring additive
model, a Laplace-approximate mixed model, and a two-stage method that
fixes the smoothing penalty from stage one and then estimates the
variance component and spline weights through an adaptive Gauss-Hermite
approximation of the marginal likelihood.
"""

__version__ = "0.1.0"

from .data import Dataset, from_arrays, from_groups, read_csv, write_csv
from .errors import (ConfigurationError, DataFormatError, DomainError,
                     NumericError, PmlgammError)
from .estimators import AdditiveModel, MixedAdditiveModel
from .families import (Bernoulli, Family, Gaussian, Poisson, get_family,
                       log_density, log_density_derivs)
from .gam import GamFit, fit_gam, gam_laml
from .gamm_laplace import GammLaplaceFit, fit_gamm_laplace, laml_objective
from .inner import (InnerState, PenaltyState, Workspace, group_mode,
                    group_modes, group_nll, inner_newton, penalized_nll,
                    penalized_nll_gradient, penalized_nll_hessian)
from .pml import (FunctionBand, PmlFit, fit_pml, per_group_log_marginals,
                  pml_gradient, pml_objective, wald_band)
from .quadrature import QuadratureRule, adaptive_integrate, gauss_hermite
from .simulate import simulate_dataset, true_function
from .splines import (AdditiveDesign, BasisRealization, SmoothSpec,
                      apply_constraint, build_basis, build_design, eval_basis,
                      penalty_matrix)
from .study import (StudyConfig, StudyRecord, aggregate, replicate_seed,
                    run_replicate, run_study, write_records_csv,
                    write_summary_csv)

__all__ = [
    "AdditiveDesign", "AdditiveModel", "BasisRealization", "Bernoulli",
    "ConfigurationError", "DataFormatError", "Dataset", "DomainError",
    "Family", "FunctionBand", "GamFit", "GammLaplaceFit", "Gaussian",
    "InnerState", "MixedAdditiveModel", "NumericError", "PenaltyState",
    "PmlFit", "PmlgammError", "Poisson", "QuadratureRule", "SmoothSpec",
    "StudyConfig", "StudyRecord", "Workspace", "adaptive_integrate",
    "aggregate", "apply_constraint", "build_basis", "build_design",
    "eval_basis", "fit_gam", "fit_gamm_laplace", "fit_pml", "from_arrays",
    "from_groups", "gam_laml", "gauss_hermite", "get_family", "group_mode",
    "group_modes", "group_nll", "inner_newton", "laml_objective",
    "log_density", "log_density_derivs", "penalized_nll",
    "penalized_nll_gradient", "penalized_nll_hessian",
    "per_group_log_marginals", "pml_gradient", "pml_objective", "read_csv",
    "replicate_seed", "run_replicate", "run_study", "simulate_dataset",
    "true_function", "wald_band", "write_csv", "write_records_csv",
    "write_summary_csv",
]
