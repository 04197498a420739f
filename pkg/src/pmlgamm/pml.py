"""Stage two: penalized adaptive-quadrature marginal likelihood.

With smoothing parameters fixed at their stage-one estimates, the
variance component and spline weights are estimated jointly by
minimizing

    M(sigma, beta) = -sum_i log I_i(sigma, beta) + 0.5 beta' S beta,

where I_i is the i-th group's likelihood contribution integrated over
its random intercept by Gauss-Hermite quadrature recentred at the
group's conditional mode and rescaled by the curvature there. The score
is exact: the per-group mode and curvature are differentiated implicitly
through their defining equations, which needs third-order log-density
derivatives. Optimization runs in (log sigma, beta) so sigma stays
positive and Wald curvature is well defined.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import NumericError
from .inner import PenaltyState, Workspace, _modes_from_eta, stable_total
from .quadrature import QuadratureRule, gauss_hermite

_LOG_2PI = math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)

WALD_Z = 1.959964  # two-sided 95% normal quantile
DEFAULT_QUAD_POINTS = 9
HESSIAN_FD_STEP = 1e-5
GRAD_TOL_SCALE = 1e-6


@dataclass
class PmlFit:
    """Result of the stage-two fit."""

    sigma_hat: float
    beta_hat: np.ndarray
    lambda_used: np.ndarray
    k: int
    objective: float
    hessian: np.ndarray            # (1+d, 1+d) in (log sigma, beta)
    covariance: np.ndarray | None  # inverse Hessian; None when not PD
    converged: bool
    iterations: int
    gradient_norm: float

    @property
    def ok(self) -> bool:
        return self.converged and self.covariance is not None

    @property
    def beta_covariance(self) -> np.ndarray:
        if self.covariance is None:
            raise NumericError("covariance withheld: Hessian was not positive "
                               "definite at the reported optimum")
        return self.covariance[1:, 1:]


@dataclass
class FunctionBand:
    """Pointwise estimate and 95% Wald limits of a smooth on a grid."""

    grid: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def write_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["grid", "estimate", "lower", "upper"])
            for row in zip(self.grid, self.estimate, self.lower, self.upper):
                writer.writerow([repr(float(v)) for v in row])


def _as_rule(k) -> QuadratureRule:
    return k if isinstance(k, QuadratureRule) else gauss_hermite(int(k))


class _PmlEngine:
    """One objective/score evaluation pipeline with warm-started modes."""

    def __init__(self, ws: Workspace, lam, rule: QuadratureRule):
        self.ws = ws
        self.penalty = PenaltyState.from_design(ws.design, lam)
        self.rule = rule
        self.u_warm = np.zeros(ws.m)

    def value_and_grad(self, log_sigma, beta, want_grad=True):
        ws, rule = self.ws, self.rule
        fam, y = ws.family, ws.y
        if not np.isfinite(log_sigma) or abs(log_sigma) > 40.0:
            raise NumericError(f"log sigma {log_sigma!r} out of usable range")
        sigma = math.exp(log_sigma)
        inv_var = 1.0 / (sigma * sigma)
        eta0 = ws.B @ beta
        ws.check_finite_eta(eta0)
        u_hat, h = _modes_from_eta(ws, eta0, sigma, self.u_warm)
        self.u_warm = u_hat
        rh = 1.0 / np.sqrt(h)
        z = rule.nodes
        U = u_hat[:, None] + _SQRT2 * rh[:, None] * z[None, :]     # (m, k)
        eta = eta0[:, None] + U[ws.row_group]                      # (n, k)
        ll = fam.log_density(y[:, None], eta)
        neg_l = (-ws.group_sum(ll)
                 + 0.5 * _LOG_2PI + log_sigma + 0.5 * inv_var * U * U)
        arg = rule.scaled_log_weights[None, :] - neg_l             # (m, k)
        arg_max = arg.max(axis=1)
        expd = np.exp(arg - arg_max[:, None])
        expd_sum = expd.sum(axis=1)
        log_marg = (0.5 * math.log(2.0) - 0.5 * np.log(h)
                    + arg_max + np.log(expd_sum))                  # (m,)
        value = -stable_total(log_marg) + self.penalty.value(beta)
        if not want_grad:
            return value, None, log_marg

        p = expd / expd_sum[:, None]                               # softmax weights
        eta_hat = eta0 + u_hat[ws.row_group]
        d2_hat = fam.d2(y, eta_hat)
        d3_hat = fam.d3(y, eta_hat)
        t3 = -ws.group_sum(d3_hat)                 # d^3 L / du^3 at the mode
        d1_nodes = fam.d1(y[:, None], eta)
        lu_nodes = -ws.group_sum(d1_nodes) + inv_var * U           # dL/du at nodes
        g1 = np.sum(p * lu_nodes, axis=1)
        g2 = np.sum(p * lu_nodes * z[None, :], axis=1)
        kappa = 0.5 / h - g2 / (_SQRT2 * h ** 1.5)
        du_ds = 2.0 * u_hat * inv_var / h          # d mode / d log sigma
        direct_s = np.sum(p * (1.0 - inv_var * U * U), axis=1)
        grad_s = float(np.sum((g1 + kappa * t3) * du_ds
                              - 2.0 * inv_var * kappa + direct_s))
        alpha = (g1 + kappa * t3) / h
        c_rows = np.sum(p[ws.row_group] * d1_nodes, axis=1)
        w_rows = (alpha[ws.row_group] * d2_hat
                  - kappa[ws.row_group] * d3_hat - c_rows)
        grad_beta = ws.B.T @ w_rows + self.penalty.gradient(beta)
        grad = np.concatenate([[grad_s], grad_beta])
        return value, grad, log_marg


def pml_objective(log_sigma, beta, lam, k, data, family, design) -> float:
    """Penalized quadrature-approximate negative log-marginal likelihood."""
    ws = Workspace(data, family, design)
    engine = _PmlEngine(ws, lam, _as_rule(k))
    value, _, _ = engine.value_and_grad(float(log_sigma),
                                        np.asarray(beta, dtype=float),
                                        want_grad=False)
    return value


def pml_gradient(log_sigma, beta, lam, k, data, family, design) -> np.ndarray:
    """Exact gradient of :func:`pml_objective` in (log sigma, beta)."""
    ws = Workspace(data, family, design)
    engine = _PmlEngine(ws, lam, _as_rule(k))
    _, grad, _ = engine.value_and_grad(float(log_sigma),
                                       np.asarray(beta, dtype=float))
    return grad


def per_group_log_marginals(log_sigma, beta, lam, k, data, family, design):
    """Per-group log integrals; their negated sorted sum plus the penalty
    equals the objective."""
    ws = Workspace(data, family, design)
    engine = _PmlEngine(ws, lam, _as_rule(k))
    _, _, log_marg = engine.value_and_grad(float(log_sigma),
                                           np.asarray(beta, dtype=float),
                                           want_grad=False)
    return log_marg


def pml_objective_weighted_nll_variant(log_sigma, beta, lam, k, data, family,
                                       design) -> float:
    """Debug variant applying quadrature weights to L itself, not exp(-L).

    Kept for comparison only: the fitted objective integrates exp(-L).
    Returns NaN when a weighted sum is nonpositive.
    """
    ws = Workspace(data, family, design)
    rule = _as_rule(k)
    sigma = math.exp(log_sigma)
    beta = np.asarray(beta, dtype=float)
    eta0 = ws.B @ beta
    u_hat, h = _modes_from_eta(ws, eta0, sigma)
    U = u_hat[:, None] + (1.0 / np.sqrt(h))[:, None] * rule.nodes[None, :]
    eta = eta0[:, None] + U[ws.row_group]
    ll = ws.family.log_density(ws.y[:, None], eta)
    neg_l = (-ws.group_sum(ll)
             + 0.5 * _LOG_2PI + math.log(sigma) + 0.5 * U * U / sigma ** 2)
    weighted = np.sum(rule.weights[None, :] * neg_l, axis=1)
    if np.any(weighted <= 0):
        return float("nan")
    value = -np.sum(-0.5 * np.log(h) + np.log(weighted))
    return float(value + PenaltyState.from_design(ws.design, lam).value(beta))


def fit_pml(data, family, design, gam_fit, k=DEFAULT_QUAD_POINTS, *,
            max_iter=200, hessian_step=HESSIAN_FD_STEP) -> PmlFit:
    """Quasi-Newton fit of (log sigma, beta) with the exact score.

    Starts from log sigma = 0 and the stage-one spline weights; the
    stage-one smoothing parameters are treated as fixed and known. The
    Wald Hessian is a central difference of the exact gradient.
    """
    ws = Workspace(data, family, design)
    rule = _as_rule(k)
    lam = np.atleast_1d(np.asarray(gam_fit.lambda_hat, dtype=float))
    engine = _PmlEngine(ws, lam, rule)
    x0 = np.concatenate([[0.0], np.asarray(gam_fit.beta, dtype=float)])

    def fun(x):
        try:
            value, grad, _ = engine.value_and_grad(x[0], x[1:])
        except NumericError:
            return 1e100, np.zeros_like(x)
        if not np.isfinite(value):
            return 1e100, np.zeros_like(x)
        return value, grad

    res = minimize(fun, x0, jac=True, method="BFGS",
                   options={"maxiter": max_iter, "gtol": 1e-6})
    x = res.x
    value, grad, _ = engine.value_and_grad(x[0], x[1:])
    gnorm = float(np.linalg.norm(grad))
    converged = bool(gnorm < GRAD_TOL_SCALE * (1.0 + abs(value)))

    hessian = _fd_hessian_of_gradient(engine, x, hessian_step)
    covariance = _invert_if_pd(hessian)
    return PmlFit(
        sigma_hat=float(math.exp(x[0])),
        beta_hat=x[1:].copy(),
        lambda_used=lam,
        k=rule.order,
        objective=float(value),
        hessian=hessian,
        covariance=covariance,
        converged=converged,
        iterations=int(res.nit),
        gradient_norm=gnorm,
    )


def _fd_hessian_of_gradient(engine, x, step):
    dim = x.size
    H = np.empty((dim, dim))
    for j in range(dim):
        xp = x.copy()
        xp[j] += step
        xm = x.copy()
        xm[j] -= step
        _, gp, _ = engine.value_and_grad(xp[0], xp[1:])
        _, gm, _ = engine.value_and_grad(xm[0], xm[1:])
        H[:, j] = (gp - gm) / (2.0 * step)
    return 0.5 * (H + H.T)


def _invert_if_pd(H):
    try:
        c, low = cho_factor(H, lower=True)
    except np.linalg.LinAlgError:
        return None
    return cho_solve((c, low), np.eye(H.shape[0]))


def wald_band(fit: PmlFit, design, grid, smooth=0, center_weights=None) -> FunctionBand:
    """Pointwise 95% Wald band for one smooth over ``grid``.

    ``center_weights`` (a length-d vector w) switches to the centered
    contrast b(x) - w, whose variance excludes the level direction; the
    simulation harness uses the mean basis row over the data for this.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    W = design.smooth_rows(grid, smooth)
    if center_weights is not None:
        W = W - np.asarray(center_weights, dtype=float)[None, :]
    estimate = W @ fit.beta_hat
    cov = fit.beta_covariance
    variance = np.einsum("ij,jk,ik->i", W, cov, W)
    half = WALD_Z * np.sqrt(np.maximum(variance, 0.0))
    return FunctionBand(grid, estimate, estimate - half, estimate + half)
