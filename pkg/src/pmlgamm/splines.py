"""Cubic B-spline bases, curvature penalties, and additive designs.

Each smooth term is represented in a cubic B-spline basis on a clamped
knot sequence (boundary knots repeated to multiplicity four). The
roughness penalty is the Gram matrix of second derivatives,

    S[l, r] = ∫ b_l''(x) b_r''(x) dx,

computed exactly with two-point Gauss-Legendre quadrature per knot
interval (the integrand is piecewise quadratic). S is symmetric positive
semi-definite with a two-dimensional null space spanned by the
coefficient vectors of the constant and linear functions, hence rank
``num_basis - 2``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigurationError, DomainError

DEGREE = 3
KNOT_STRATEGIES = ("quantile", "uniform")


@dataclass(frozen=True)
class SmoothSpec:
    """Configuration for one smooth term.

    ``covariate_index`` is the 0-based column of the covariate matrix the
    smooth applies to. ``num_basis`` must be at least 6 so the penalty
    has interior structure beyond its null space.
    """

    covariate_index: int = 0
    num_basis: int = 10
    knot_strategy: str = "quantile"

    def __post_init__(self):
        if self.covariate_index < 0:
            raise ConfigurationError("covariate_index must be nonnegative")
        if self.num_basis < 6:
            raise ConfigurationError(
                f"num_basis must be at least 6, got {self.num_basis}"
            )
        if self.knot_strategy not in KNOT_STRATEGIES:
            raise ConfigurationError(
                f"knot_strategy must be one of {KNOT_STRATEGIES}, "
                f"got {self.knot_strategy!r}"
            )


class BasisRealization:
    """A realized B-spline basis: knots, penalty, optional constraint.

    ``constraint`` is either None (raw basis, ``dim == num_basis``) or a
    ``(num_basis, num_basis - 1)`` orthonormal transform Z; the working
    design is then ``B @ Z`` and the working penalty ``Z' S Z``.
    """

    def __init__(self, spec, knots, penalty, constraint=None):
        self.spec = spec
        self.knots = np.asarray(knots, dtype=float)
        self.penalty_raw = penalty
        self.constraint = constraint
        self.support = (float(self.knots[DEGREE]), float(self.knots[-DEGREE - 1]))
        self._deriv2 = None

    @property
    def num_basis(self) -> int:
        return self.knots.shape[0] - DEGREE - 1

    @property
    def dim(self) -> int:
        """Number of working design columns."""
        return self.num_basis if self.constraint is None else self.num_basis - 1

    @property
    def penalty(self) -> np.ndarray:
        """Working penalty matrix, in the same coordinates as ``design``."""
        if self.constraint is None:
            return self.penalty_raw
        return _symmetrize(self.constraint.T @ self.penalty_raw @ self.constraint)

    def _check_range(self, x):
        lo, hi = self.support
        if np.any(x < lo) or np.any(x > hi):
            bad = x[(x < lo) | (x > hi)]
            raise DomainError(
                f"covariate value {float(np.ravel(bad)[0])!r} outside the knot "
                f"range [{lo}, {hi}]; extrapolation is not supported"
            )

    def evaluate(self, x) -> np.ndarray:
        """Raw basis values, shape (len(x), num_basis)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise DomainError("covariate values must be finite")
        self._check_range(x)
        return BSpline.design_matrix(x, self.knots, DEGREE, extrapolate=False).toarray()

    def design(self, x) -> np.ndarray:
        """Working design columns (constrained if a constraint is set)."""
        B = self.evaluate(x)
        return B if self.constraint is None else B @ self.constraint

    def second_derivative(self, x) -> np.ndarray:
        """Raw second-derivative values b_l''(x), shape (len(x), num_basis)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self._check_range(x)
        if self._deriv2 is None:
            d = self.num_basis
            splines = []
            for l in range(d):
                coef = np.zeros(d)
                coef[l] = 1.0
                splines.append(BSpline(self.knots, coef, DEGREE).derivative(2))
            self._deriv2 = splines
        return np.column_stack([s(x) for s in self._deriv2])


def build_basis(spec: SmoothSpec, covariate_values, support=None) -> BasisRealization:
    """Place knots for ``spec`` over ``covariate_values`` and build the basis.

    Interior knots follow the spec's strategy (empirical quantiles by
    default); boundary knots sit at the data range, repeated to
    multiplicity four. ``support`` overrides the boundary interval, which
    lets a simulation place knots on the design range rather than the
    realized sample range.
    """
    x = np.asarray(covariate_values, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise DomainError("covariate values must be finite")
    distinct = np.unique(x)
    if distinct.shape[0] < spec.num_basis:
        raise ConfigurationError(
            f"need at least {spec.num_basis} distinct covariate values to "
            f"build a {spec.num_basis}-dimensional basis, got {distinct.shape[0]}"
        )
    if support is None:
        lo, hi = float(x.min()), float(x.max())
    else:
        lo, hi = float(support[0]), float(support[1])
        if lo > x.min() or hi < x.max():
            raise ConfigurationError("support must contain the covariate range")
    n_interior = spec.num_basis - DEGREE - 1
    if spec.knot_strategy == "uniform":
        interior = lo + (hi - lo) * np.arange(1, n_interior + 1) / (n_interior + 1)
    else:
        probs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(x, probs)
    if np.any(interior <= lo) or np.any(interior >= hi) or np.any(np.diff(interior) < 0):
        raise ConfigurationError(
            "degenerate interior knots; covariate values are too concentrated"
        )
    knots = np.concatenate([[lo] * (DEGREE + 1), interior, [hi] * (DEGREE + 1)])
    basis = BasisRealization(spec, knots, penalty=None)
    basis.penalty_raw = penalty_matrix(basis)
    return basis


def eval_basis(basis: BasisRealization, x):
    """Raw basis vector/matrix at ``x`` (1-D for scalar input)."""
    values = basis.evaluate(x)
    return values[0] if np.isscalar(x) or np.ndim(x) == 0 else values


def penalty_matrix(basis: BasisRealization) -> np.ndarray:
    """Second-derivative Gram matrix of the raw basis.

    Exact: b'' is piecewise linear, so the products are piecewise
    quadratic and two-point Gauss-Legendre per interval integrates them
    without error.
    """
    breaks = np.unique(basis.knots)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    offset = half / np.sqrt(3.0)
    points = np.concatenate([mid - offset, mid + offset])
    weights = np.concatenate([half, half])
    D2 = basis.second_derivative(points)
    S = D2.T @ (weights[:, None] * D2)
    return _symmetrize(S)


def apply_constraint(basis: BasisRealization, covariate_values) -> BasisRealization:
    """Sum-to-zero constrain the basis over ``covariate_values``.

    Returns a new realization whose working design columns each sum to
    zero over the given values. The transform is the trailing block of a
    Householder reflection sending the column-sum vector to a multiple of
    e1, so Z has orthonormal columns spanning the constraint null space.
    """
    c = basis.evaluate(covariate_values).sum(axis=0)
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise ConfigurationError("constraint vector is zero; cannot constrain")
    v = c.copy()
    v[0] += np.copysign(norm, c[0] if c[0] != 0 else 1.0)
    H = np.eye(basis.num_basis) - 2.0 * np.outer(v, v) / (v @ v)
    Z = H[:, 1:]
    return BasisRealization(basis.spec, basis.knots, basis.penalty_raw, constraint=Z)


def _symmetrize(S):
    return 0.5 * (S + S.T)


class AdditiveDesign:
    """Column layout of an additive model: optional intercept + smooths.

    Collects one :class:`BasisRealization` per smooth and exposes the
    assembled design matrix, the block-diagonal penalty precision
    ``blockdiag(λ_1 S_1, ..., λ_p S_p)`` (zero block for the intercept),
    and the per-smooth penalty ranks used by marginal-likelihood
    normalizers.
    """

    def __init__(self, bases, intercept=False):
        self.bases = list(bases)
        self.intercept = bool(intercept)
        if any(b.constraint is not None for b in self.bases) and not self.intercept:
            raise ConfigurationError(
                "constrained smooths need a global intercept column"
            )
        offset = 1 if self.intercept else 0
        self.block_slices = []
        for b in self.bases:
            self.block_slices.append(slice(offset, offset + b.dim))
            offset += b.dim
        self.dim = offset
        # the curvature penalty annihilates constants and linear functions
        self.penalty_ranks = [b.num_basis - 2 for b in self.bases]

    @property
    def num_smooths(self) -> int:
        return len(self.bases)

    def design_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        cols = []
        if self.intercept:
            cols.append(np.ones((X.shape[0], 1)))
        for b in self.bases:
            cols.append(b.design(X[:, b.spec.covariate_index]))
        return np.hstack(cols)

    def _lam(self, lam):
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape[0] != self.num_smooths:
            raise ConfigurationError(
                f"expected {self.num_smooths} smoothing parameters, got {lam.shape[0]}"
            )
        if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ConfigurationError("smoothing parameters must be positive and finite")
        return lam

    def penalty_precision(self, lam) -> np.ndarray:
        """Block-diagonal penalty precision at smoothing parameters ``lam``."""
        lam = self._lam(lam)
        S = np.zeros((self.dim, self.dim))
        for lam_s, b, sl in zip(lam, self.bases, self.block_slices):
            S[sl, sl] = lam_s * b.penalty
        return S

    def penalty_value(self, beta, lam) -> float:
        lam = self._lam(lam)
        total = 0.0
        for lam_s, b, sl in zip(lam, self.bases, self.block_slices):
            bs = beta[sl]
            total += 0.5 * lam_s * float(bs @ b.penalty @ bs)
        return total

    def penalty_gradient(self, beta, lam) -> np.ndarray:
        lam = self._lam(lam)
        g = np.zeros(self.dim)
        for lam_s, b, sl in zip(lam, self.bases, self.block_slices):
            g[sl] = lam_s * (b.penalty @ beta[sl])
        return g

    def log_penalty_normalizer(self, lam, mode="rank") -> float:
        """λ-dependent part of the negative log penalty normalizer.

        ``rank`` scales each log λ_s by half the penalty rank, the
        coefficient implied by the improper Gaussian prior; ``unit``
        uses coefficient one.
        """
        lam = self._lam(lam)
        if mode == "rank":
            return -float(sum(0.5 * r * np.log(l) for r, l in zip(self.penalty_ranks, lam)))
        if mode == "unit":
            return -float(np.sum(np.log(lam)))
        raise ConfigurationError(f"unknown penalty normalizer mode {mode!r}")

    def smooth_rows(self, grid, s=0) -> np.ndarray:
        """Full-width rows w with w @ beta = f_s(grid); other blocks zero.

        The intercept column is excluded, so the rows evaluate the smooth
        alone.
        """
        grid = np.atleast_1d(np.asarray(grid, dtype=float))
        W = np.zeros((grid.shape[0], self.dim))
        b = self.bases[s]
        W[:, self.block_slices[s]] = b.design(grid)
        return W

    def smooth_value(self, beta, grid, s=0) -> np.ndarray:
        return self.smooth_rows(grid, s) @ beta


def build_design(X, num_basis=10, knot_strategy="quantile", support=None,
                 constrained=None) -> AdditiveDesign:
    """Build one smooth per covariate column of ``X``.

    Single-covariate models default to an unconstrained smooth that
    absorbs the intercept; with several covariates each smooth is
    sum-to-zero constrained and a global intercept column is added.
    ``support`` may be a single (lo, hi) pair applied to every covariate
    or a list of pairs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[1]
    if constrained is None:
        constrained = p > 1
    if support is None or (len(support) == 2 and np.isscalar(support[0])):
        support = [support] * p
    bases = []
    for j in range(p):
        spec = SmoothSpec(covariate_index=j, num_basis=num_basis,
                          knot_strategy=knot_strategy)
        basis = build_basis(spec, X[:, j], support=support[j])
        if constrained:
            basis = apply_constraint(basis, X[:, j])
        bases.append(basis)
    return AdditiveDesign(bases, intercept=constrained)
