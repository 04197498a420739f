"""Penalized negative log-likelihood and its optimizers in (u, beta).

For a grouped dataset the joint objective at fixed variance and
smoothing parameters is

    sum_i L_i(u_i, beta) + 0.5 * beta' S_lam beta,
    L_i(u, beta) = -sum_j log psi(y_ij; eta_ij) - log g(u; sigma),

with eta_ij = b(x_ij)' beta + u and g the N(0, sigma^2) density. The
joint Hessian has an arrow structure — diagonal u-block, dense
beta-block, thin coupling — which the Newton solver and log-determinant
exploit through the Schur complement on the u-block, giving O(m d^2)
cost per step instead of O((m + d)^3).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericError
from .families import get_family

_LOG_2PI = math.log(2.0 * math.pi)

MODE_GRAD_TOL = 1e-10
MODE_MAX_ITER = 100
JOINT_GRAD_TOL = 1e-8
JOINT_MAX_ITER = 100
# relative objective change below which double precision sees a flat function
_FLOAT_FLOOR = 1e-13


def stable_total(values) -> float:
    """Sum that is invariant to the order of its inputs.

    Sorting before accumulating makes cross-group reductions bit-identical
    under group relabeling.
    """
    return float(np.sum(np.sort(np.asarray(values, dtype=float))))


@dataclass(frozen=True)
class PenaltyState:
    """Smoothing parameters with their assembled penalty precision."""

    lam: np.ndarray
    precision: np.ndarray
    ranks: tuple

    @classmethod
    def from_design(cls, design, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        return cls(
            lam=lam,
            precision=design.penalty_precision(lam),
            ranks=tuple(design.penalty_ranks),
        )

    def value(self, beta) -> float:
        return 0.5 * float(beta @ self.precision @ beta)

    def gradient(self, beta) -> np.ndarray:
        return self.precision @ beta


@dataclass(frozen=True)
class InnerState:
    """A point in the joint (u, beta) space at a given sigma."""

    u: np.ndarray
    beta: np.ndarray
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive; the no-random-effect "
                             "model is a separate fit, not sigma = 0")


class Workspace:
    """Precomputed per-dataset quantities shared by all estimation passes."""

    def __init__(self, data, family, design):
        self.data = data
        self.family = get_family(family)
        self.family.validate_response(data.y)
        self.design = design
        self.y = data.y
        self.B = design.design_matrix(data.X)
        self.row_group = data.row_group
        self.starts = data.group_starts
        self.sizes = data.group_sizes.astype(float)
        self.m = data.m
        self.n = data.n
        self.d = self.B.shape[1]

    def group_sum(self, values):
        return np.add.reduceat(values, self.starts, axis=0)

    def eta(self, u, beta):
        return self.B @ beta + u[self.row_group]

    def check_finite_eta(self, eta):
        if not np.all(np.isfinite(eta)):
            row = int(np.flatnonzero(~np.isfinite(eta))[0])
            group = int(self.data.group_ids[self.row_group[row]])
            raise NumericError(
                f"non-finite linear predictor at row {row} (group {group})"
            )


def gaussian_prior_nll(u, sigma):
    """Per-group -log g(u_i; sigma) for the N(0, sigma^2) intercept prior."""
    return 0.5 * _LOG_2PI + np.log(sigma) + 0.5 * (u * u) / (sigma * sigma)


def penalized_nll(ws: Workspace, state: InnerState, penalty: PenaltyState) -> float:
    """Joint penalized objective; log-lambda terms are tracked elsewhere."""
    eta = ws.eta(state.u, state.beta)
    ws.check_finite_eta(eta)
    ll = ws.family.log_density(ws.y, eta)
    per_group = -ws.group_sum(ll) + gaussian_prior_nll(state.u, state.sigma)
    return stable_total(per_group) + penalty.value(state.beta)


def penalized_nll_gradient(ws, state, penalty) -> np.ndarray:
    """Gradient in (u, beta), length m + d."""
    eta = ws.eta(state.u, state.beta)
    ws.check_finite_eta(eta)
    d1 = ws.family.d1(ws.y, eta)
    gu = -ws.group_sum(d1) + state.u / state.sigma ** 2
    gb = -(ws.B.T @ d1) + penalty.gradient(state.beta)
    return np.concatenate([gu, gb])


@dataclass
class BlockHessian:
    """Arrow-structured Hessian: diagonal u-block, dense beta-block."""

    diag_u: np.ndarray    # (m,)
    cross: np.ndarray     # (m, d); row i = d^2 / (du_i dbeta)
    beta_block: np.ndarray  # (d, d)

    def schur(self) -> np.ndarray:
        """beta_block - cross' diag(1/diag_u) cross."""
        scaled = self.cross / self.diag_u[:, None]
        S = self.beta_block - self.cross.T @ scaled
        return 0.5 * (S + S.T)

    def logdet(self) -> float:
        if np.any(self.diag_u <= 0):
            raise NumericError("u-block of the Hessian is not positive")
        try:
            c, _ = cho_factor(self.schur(), lower=True)
        except np.linalg.LinAlgError:
            raise NumericError("joint Hessian is not positive definite") from None
        return float(np.sum(np.log(self.diag_u)) + 2.0 * np.sum(np.log(np.diag(c))))

    def solve(self, gu, gb):
        """Solve H [du; db] = [gu; gb] via the u-block Schur complement."""
        c, low = cho_factor(self.schur(), lower=True)
        rhs = gb - self.cross.T @ (gu / self.diag_u)
        db = cho_solve((c, low), rhs)
        du = (gu - self.cross @ db) / self.diag_u
        return du, db

    def beta_covariance(self) -> np.ndarray:
        """beta-block of the full Hessian inverse."""
        try:
            c, low = cho_factor(self.schur(), lower=True)
        except np.linalg.LinAlgError:
            raise NumericError("joint Hessian is not positive definite") from None
        return cho_solve((c, low), np.eye(self.beta_block.shape[0]))

    def full(self) -> np.ndarray:
        m, d = self.cross.shape
        H = np.zeros((m + d, m + d))
        H[:m, :m] = np.diag(self.diag_u)
        H[:m, m:] = self.cross
        H[m:, :m] = self.cross.T
        H[m:, m:] = self.beta_block
        return H


def penalized_nll_hessian(ws, state, penalty) -> BlockHessian:
    eta = ws.eta(state.u, state.beta)
    ws.check_finite_eta(eta)
    q = -ws.family.d2(ws.y, eta)  # >= 0 for log-concave families
    diag_u = ws.group_sum(q) + 1.0 / state.sigma ** 2
    cross = ws.group_sum(q[:, None] * ws.B)
    beta_block = ws.B.T @ (q[:, None] * ws.B) + penalty.precision
    return BlockHessian(diag_u, cross, 0.5 * (beta_block + beta_block.T))


def group_nll(ws: Workspace, i: int, u: float, beta, sigma: float) -> float:
    """L_i(u, beta): one group's negative log-likelihood plus prior term."""
    if not 0 <= i < ws.m:
        raise IndexError(f"group index {i} out of range [0, {ws.m})")
    s = ws.starts[i]
    e = s + int(ws.sizes[i])
    eta = ws.B[s:e] @ beta + u
    if not np.all(np.isfinite(eta)):
        raise NumericError(f"non-finite linear predictor in group index {i}")
    ll = float(np.sum(ws.family.log_density(ws.y[s:e], eta)))
    return -ll + float(gaussian_prior_nll(u, sigma))


def group_mode(ws: Workspace, i: int, beta, sigma: float):
    """Mode and curvature of u -> L_i(u, beta) for one group."""
    u, h = group_modes(ws, beta, sigma)
    return float(u[i]), float(h[i])


def group_modes(ws: Workspace, beta, sigma, u0=None):
    """All per-group modes of L_i and curvatures there, by damped Newton.

    L_i is strictly convex in u (log-concave family plus Gaussian prior),
    with curvature always above 1/sigma^2.
    """
    eta0 = ws.B @ beta
    ws.check_finite_eta(eta0)
    return _modes_from_eta(ws, eta0, sigma, u0)


def _modes_from_eta(ws, eta0, sigma, u0=None):
    fam, y = ws.family, ws.y
    inv_var = 1.0 / (sigma * sigma)
    u = np.zeros(ws.m) if u0 is None else np.array(u0, dtype=float)

    def kernel(u_vec):
        ll = fam.log_density(y, eta0 + u_vec[ws.row_group])
        return -ws.group_sum(ll) + 0.5 * inv_var * u_vec * u_vec

    f = kernel(u)
    if not np.all(np.isfinite(f)):
        u = np.zeros(ws.m)
        f = kernel(u)
        if not np.all(np.isfinite(f)):
            raise NumericError("group objectives are non-finite at u = 0")
    for _ in range(MODE_MAX_ITER):
        eta = eta0 + u[ws.row_group]
        g = -ws.group_sum(fam.d1(y, eta)) + inv_var * u
        h = -ws.group_sum(fam.d2(y, eta)) + inv_var
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            raise NumericError("non-finite mode-search derivatives")
        if np.max(np.abs(g)) < MODE_GRAD_TOL:
            return u, h
        step = g / h
        if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(np.abs(u))):
            # u cannot move in double precision; curvature-dominated regime
            return u, h
        t = np.ones(ws.m)
        for _ in range(60):
            u_new = u - t * step
            f_new = kernel(u_new)
            worse = ~(f_new <= f + 1e-12 * np.abs(f))
            if not np.any(worse):
                break
            t[worse] *= 0.5
        else:
            raise NumericError("mode line search failed to make progress")
        u, f = u_new, f_new
    grad = float(np.max(np.abs(g)))
    raise NumericError(
        f"group mode search did not converge in {MODE_MAX_ITER} iterations "
        f"(max |gradient| = {grad:.3e})"
    )


@dataclass
class InnerSolution:
    u: np.ndarray
    beta: np.ndarray
    hessian: BlockHessian
    value: float
    iterations: int


def inner_newton(ws: Workspace, penalty: PenaltyState, sigma: float,
                 start=None) -> InnerSolution:
    """Joint minimizer of the penalized objective over (u, beta) at fixed
    (sigma, lambda), by Newton with backtracking and a ridge fallback."""
    if start is None:
        u = np.zeros(ws.m)
        beta = np.zeros(ws.d)
    else:
        u = np.array(start[0], dtype=float)
        beta = np.array(start[1], dtype=float)
    inv_var = 1.0 / (sigma * sigma)
    prior_const = ws.m * (0.5 * _LOG_2PI + math.log(sigma))

    def value_at(u_vec, beta_vec):
        eta = ws.B @ beta_vec + u_vec[ws.row_group]
        ll = ws.family.log_density(ws.y, eta)
        if not np.all(np.isfinite(ll)):
            return np.inf
        return (-float(np.sum(ll)) + prior_const
                + 0.5 * inv_var * float(u_vec @ u_vec)
                + penalty.value(beta_vec))

    f = value_at(u, beta)
    if not np.isfinite(f):
        u = np.zeros(ws.m)
        beta = np.zeros(ws.d)
        f = value_at(u, beta)
    hess = None
    for it in range(1, JOINT_MAX_ITER + 1):
        eta = ws.B @ beta + u[ws.row_group]
        ws.check_finite_eta(eta)
        d1 = ws.family.d1(ws.y, eta)
        q = -ws.family.d2(ws.y, eta)
        gu = -ws.group_sum(d1) + inv_var * u
        gb = -(ws.B.T @ d1) + penalty.gradient(beta)
        hess = BlockHessian(
            diag_u=ws.group_sum(q) + inv_var,
            cross=ws.group_sum(q[:, None] * ws.B),
            beta_block=_sym(ws.B.T @ (q[:, None] * ws.B) + penalty.precision),
        )
        gnorm = math.sqrt(float(gu @ gu) + float(gb @ gb))
        if gnorm < JOINT_GRAD_TOL * (1.0 + abs(f)):
            return InnerSolution(u, beta, hess, f, it - 1)
        du, db = _solve_with_ridge(hess, gu, gb)
        decrement = float(gu @ du) + float(gb @ db)  # predicted decrease scale
        if decrement <= _FLOAT_FLOOR * (1.0 + abs(f)):
            # objective is flat to double precision: numerical minimizer
            return InnerSolution(u, beta, hess, f, it - 1)
        t = 1.0
        for _ in range(60):
            u_new = u - t * du
            beta_new = beta - t * db
            f_new = value_at(u_new, beta_new)
            if f_new <= f - 1e-4 * t * decrement + 1e-12 * abs(f):
                break
            t *= 0.5
        else:
            raise NumericError("inner Newton line search failed")
        if f - f_new <= _FLOAT_FLOOR * (1.0 + abs(f)):
            # accepted step gained nothing measurable: at the float floor
            return InnerSolution(u_new, beta_new, hess, f_new, it)
        u, beta, f = u_new, beta_new, f_new
    raise NumericError(
        f"inner Newton did not converge in {JOINT_MAX_ITER} iterations "
        f"(gradient norm {gnorm:.3e})"
    )


def _solve_with_ridge(hess: BlockHessian, gu, gb):
    """Newton step; on an indefinite Schur complement retry with a ridge."""
    try:
        return hess.solve(gu, gb)
    except np.linalg.LinAlgError:
        pass
    S = hess.schur()
    scale = max(float(np.mean(np.diag(S))), 1e-12)
    for tau in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0):
        try:
            ridged = BlockHessian(hess.diag_u, hess.cross,
                                  hess.beta_block + tau * scale * np.eye(S.shape[0]))
            return ridged.solve(gu, gb)
        except np.linalg.LinAlgError:
            continue
    raise NumericError("Hessian irreparably indefinite in inner Newton")


def penalized_glm_newton(B, y, family, precision, beta0=None):
    """Newton minimizer of -sum log psi(y; B beta) + 0.5 beta' P beta.

    The no-random-effect counterpart of :func:`inner_newton`; returns
    (beta, H, value, iterations) with H the penalized curvature at the
    minimizer.
    """
    family = get_family(family)
    d = B.shape[1]
    beta = np.zeros(d) if beta0 is None else np.array(beta0, dtype=float)

    def value_at(b):
        eta = B @ b
        ll = family.log_density(y, eta)
        if not np.all(np.isfinite(ll)):
            return np.inf
        return -float(np.sum(ll)) + 0.5 * float(b @ precision @ b)

    f = value_at(beta)
    if not np.isfinite(f):
        beta = np.zeros(d)
        f = value_at(beta)
    H = None
    for it in range(1, JOINT_MAX_ITER + 1):
        eta = B @ beta
        if not np.all(np.isfinite(eta)):
            raise NumericError("non-finite linear predictor in GLM Newton")
        d1 = family.d1(y, eta)
        q = -family.d2(y, eta)
        g = -(B.T @ d1) + precision @ beta
        H = _sym(B.T @ (q[:, None] * B) + precision)
        gnorm = float(np.linalg.norm(g))
        if gnorm < JOINT_GRAD_TOL * (1.0 + abs(f)):
            return beta, H, f, it - 1
        step = _chol_solve_with_ridge(H, g)
        decrement = float(g @ step)
        if decrement <= _FLOAT_FLOOR * (1.0 + abs(f)):
            return beta, H, f, it - 1
        t = 1.0
        for _ in range(60):
            beta_new = beta - t * step
            f_new = value_at(beta_new)
            if f_new <= f - 1e-4 * t * decrement + 1e-12 * abs(f):
                break
            t *= 0.5
        else:
            raise NumericError("GLM Newton line search failed")
        if f - f_new <= _FLOAT_FLOOR * (1.0 + abs(f)):
            beta, f = beta_new, f_new
            return beta, H, f, it
        beta, f = beta_new, f_new
    raise NumericError(
        f"GLM Newton did not converge in {JOINT_MAX_ITER} iterations "
        f"(gradient norm {gnorm:.3e})"
    )


def _chol_solve_with_ridge(H, g):
    scale = max(float(np.mean(np.diag(H))), 1e-12)
    for tau in (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0):
        try:
            c, low = cho_factor(H + tau * scale * np.eye(H.shape[0]), lower=True)
            return cho_solve((c, low), g)
        except np.linalg.LinAlgError:
            continue
    raise NumericError("penalized curvature irreparably indefinite")


def _sym(A):
    return 0.5 * (A + A.T)
