"""Scikit-learn style estimator wrappers.

These give the fitting routines a ``fit``/``predict`` surface with
``get_params``/``set_params`` so they drop into pipelines, grid search,
and other ecosystem tooling. The functional API under ``pmlgamm.gam``,
``pmlgamm.pml`` and ``pmlgamm.gamm_laplace`` remains the primary entry
point for programmatic use.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import from_arrays
from .errors import ConfigurationError
from .families import get_family
from .gam import fit_gam
from .gamm_laplace import fit_gamm_laplace
from .pml import fit_pml, wald_band
from .splines import build_design


def _validate_xy(X, y):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = check_array(y, ensure_2d=False, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    return X, y


class AdditiveModel(RegressorMixin, BaseEstimator):
    """Penalized additive model without random effects.

    Parameters
    ----------
    family : str
        Response family: "gaussian", "poisson" or "bernoulli".
    num_basis : int
        Basis dimension per smooth (at least 6).
    knot_strategy : str
        "quantile" (default) or "uniform" interior knot placement.
    penalty_logdet : str
        Smoothing-parameter normalizer convention, "rank" or "unit".

    Attributes
    ----------
    lambda_ : ndarray of smoothing parameters
    coef_ : ndarray of fitted spline weights
    covariance_ : inverse penalized curvature at the optimum
    converged_ : bool
    """

    def __init__(self, family="gaussian", num_basis=10,
                 knot_strategy="quantile", penalty_logdet="rank"):
        self.family = family
        self.num_basis = num_basis
        self.knot_strategy = knot_strategy
        self.penalty_logdet = penalty_logdet

    def fit(self, X, y):
        X, y = _validate_xy(X, y)
        # one pseudo-group per row: the model has no random effects
        data = from_arrays(y, X, np.arange(X.shape[0]))
        self.design_ = build_design(data.X, num_basis=self.num_basis,
                                    knot_strategy=self.knot_strategy)
        result = fit_gam(data, self.family, self.design_,
                         penalty_logdet=self.penalty_logdet)
        self.lambda_ = result.lambda_hat
        self.coef_ = result.beta
        self.covariance_ = result.beta_covariance
        self.laml_ = result.laml
        self.converged_ = result.converged
        self.n_features_in_ = X.shape[1]
        return self

    def linear_predictor(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return self.design_.design_matrix(X) @ self.coef_

    def predict(self, X):
        """Mean response on the natural scale (inverse canonical link)."""
        return get_family(self.family).mean(self.linear_predictor(X))


class MixedAdditiveModel(RegressorMixin, BaseEstimator):
    """Additive model with a per-group random intercept.

    Parameters
    ----------
    method : str
        "pml" for the two-stage quadrature fit (default) or "laplace"
        for the Laplace-approximate baseline.
    quad_points : int
        Quadrature order for method "pml".
    family, num_basis, knot_strategy, penalty_logdet : as in
        :class:`AdditiveModel`.

    Attributes
    ----------
    sigma_ : fitted random-intercept standard deviation
    lambda_ : smoothing parameters (stage-one estimates for "pml")
    coef_ : fitted spline weights
    covariance_ : covariance of coef_ (None when withheld)
    converged_ : bool
    """

    def __init__(self, method="pml", quad_points=9, family="poisson",
                 num_basis=10, knot_strategy="quantile",
                 penalty_logdet="rank"):
        self.method = method
        self.quad_points = quad_points
        self.family = family
        self.num_basis = num_basis
        self.knot_strategy = knot_strategy
        self.penalty_logdet = penalty_logdet

    def fit(self, X, y, groups=None):
        if groups is None:
            raise ConfigurationError(
                "groups is required: each row needs a group label")
        X, y = _validate_xy(X, y)
        data = from_arrays(y, X, groups)
        self.design_ = build_design(data.X, num_basis=self.num_basis,
                                    knot_strategy=self.knot_strategy)
        if self.method == "pml":
            stage1 = fit_gam(data, self.family, self.design_,
                             penalty_logdet=self.penalty_logdet)
            result = fit_pml(data, self.family, self.design_, stage1,
                             k=self.quad_points)
            self.sigma_ = result.sigma_hat
            self.lambda_ = result.lambda_used
            self.coef_ = result.beta_hat
            self.covariance_ = (result.beta_covariance
                                if result.covariance is not None else None)
            self.converged_ = result.ok
            self.fit_result_ = result
        elif self.method == "laplace":
            result = fit_gamm_laplace(data, self.family, self.design_,
                                      penalty_logdet=self.penalty_logdet)
            self.sigma_ = result.sigma_hat
            self.lambda_ = result.lambda_hat
            self.coef_ = result.beta_hat
            self.covariance_ = result.beta_covariance
            self.converged_ = result.converged
            self.fit_result_ = result
        else:
            raise ConfigurationError(
                f"method must be 'pml' or 'laplace', got {self.method!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def linear_predictor(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, ensure_2d=False, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return self.design_.design_matrix(X) @ self.coef_

    def predict(self, X):
        """Mean response at a zero random intercept."""
        return get_family(self.family).mean(self.linear_predictor(X))

    def confidence_band(self, grid, smooth=0):
        """Pointwise 95% Wald band for one smooth (method "pml" only)."""
        check_is_fitted(self, "coef_")
        if self.method != "pml":
            raise ConfigurationError(
                "confidence_band is available for method 'pml'")
        return wald_band(self.fit_result_, self.design_, grid, smooth=smooth)
