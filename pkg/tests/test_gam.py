import numpy as np
import pytest

from pmlgamm import build_design, fit_gam, from_arrays, gam_laml
from pmlgamm.simulate import simulate_dataset

from conftest import make_dataset
from oracles import central_gradient, gaussian_ridge_marginal


def _gaussian_data(seed=0, n=120, num_basis=8):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    y = np.sin(2 * np.pi * x) + rng.normal(0, 1.0, size=n)
    data = from_arrays(y, x, np.arange(n))
    design = build_design(data.X, num_basis=num_basis, support=(0.0, 1.0))
    return data, design


def test_gaussian_laml_matches_ridge_integral_oracle():
    data, design = _gaussian_data(seed=1)
    B = design.design_matrix(data.X)
    for rho in (-2.0, 0.0, 1.5, 4.0):
        lam = np.exp(rho)
        value = gam_laml([rho], data, "gaussian", design)
        oracle = (gaussian_ridge_marginal(B, data.y, design.penalty_precision([lam]))
                  + design.log_penalty_normalizer([lam], "rank"))
        assert value == pytest.approx(oracle, abs=1e-8)


def test_unit_normalizer_shifts_by_log_lambda():
    data, design = _gaussian_data(seed=2)
    for rho in (-1.0, 2.0):
        rank = gam_laml([rho], data, "gaussian", design, penalty_logdet="rank")
        unit = gam_laml([rho], data, "gaussian", design, penalty_logdet="unit")
        # rank d-2 = 6 at d = 8: coefficients 3 vs 1 on log lambda
        assert unit - rank == pytest.approx((3.0 - 1.0) * rho, rel=1e-9)


def test_response_shift_leaves_lambda_unchanged():
    # constants live in the penalty null space of the unconstrained basis
    data, design = _gaussian_data(seed=3)
    fit0 = fit_gam(data, "gaussian", design)
    shifted = from_arrays(data.y + 7.5, data.X,
                          data.group_ids[data.row_group])
    fit1 = fit_gam(shifted, "gaussian", design)
    assert np.log(fit1.lambda_hat) == pytest.approx(np.log(fit0.lambda_hat),
                                                    abs=1e-3)


def test_large_lambda_drives_fit_into_penalty_null_space():
    data, design = _gaussian_data(seed=4)
    B = design.design_matrix(data.X)
    from pmlgamm.inner import penalized_glm_newton
    beta, _, _, _ = penalized_glm_newton(
        B, data.y, "gaussian", design.penalty_precision([1e8]))
    curvature = design.penalty_value(beta, [1.0])
    assert curvature < 1e-6


def test_straight_line_signal_selects_large_lambda():
    rng = np.random.default_rng(5)
    x = rng.uniform(size=400)
    y = 1.0 + 2.0 * x + rng.normal(0, 0.5, size=400)
    data = from_arrays(y, x, np.arange(400))
    design = build_design(data.X, num_basis=8, support=(0.0, 1.0))
    fit = fit_gam(data, "gaussian", design)
    # curvature of the fit is negligible next to an unpenalized fit's
    from pmlgamm.inner import penalized_glm_newton
    beta_loose, _, _, _ = penalized_glm_newton(
        B := design.design_matrix(data.X), data.y, "gaussian",
        design.penalty_precision([1e-12]))
    assert design.penalty_value(fit.beta, [1.0]) < 1e-4 * max(
        design.penalty_value(beta_loose, [1.0]), 1e-8)


def test_sine_recovery_rmse():
    rng = np.random.default_rng(6)
    n = 2000
    x = rng.uniform(size=n)
    y = np.sin(2 * np.pi * x) + rng.normal(0, 1.0, size=n)
    data = from_arrays(y, x, np.arange(n))
    design = build_design(data.X, num_basis=10, support=(0.0, 1.0))
    fit = fit_gam(data, "gaussian", design)
    grid = np.linspace(0.05, 0.95, 200)
    fhat = design.smooth_value(fit.beta, grid)
    rmse = float(np.sqrt(np.mean((fhat - np.sin(2 * np.pi * grid)) ** 2)))
    assert rmse < 0.1


def test_row_permutation_invariance():
    rng = np.random.default_rng(7)
    data = simulate_dataset(8, 5, 1.0, family="poisson", seed=11)
    design = build_design(data.X, num_basis=8, support=(0.0, 1.0))
    fit_a = fit_gam(data, "poisson", design)
    perm = rng.permutation(data.n)
    reshuffled = from_arrays(data.y[perm], data.X[perm],
                             data.group_ids[data.row_group][perm])
    fit_b = fit_gam(reshuffled, "poisson", design)
    assert np.max(np.abs(fit_a.lambda_hat - fit_b.lambda_hat)) < 1e-10


def test_outer_gradient_small_at_optimum():
    data, design = make_dataset(family="poisson", seed=8, m=8)
    fit = fit_gam(data, "poisson", design)
    rho = np.log(fit.lambda_hat)
    if np.max(np.abs(rho)) < 19.0:  # interior optimum
        g = central_gradient(
            lambda v: gam_laml(v, data, "poisson", design), rho, step=1e-4)
        assert np.linalg.norm(g) < 1e-3


def test_gaussian_lambda_matches_direct_marginal_minimizer():
    data, design = _gaussian_data(seed=9, n=300)
    B = design.design_matrix(data.X)

    def direct(rho):
        lam = float(np.exp(rho[0]))
        return (gaussian_ridge_marginal(B, data.y, design.penalty_precision([lam]))
                + design.log_penalty_normalizer([lam], "rank"))

    from scipy.optimize import minimize_scalar
    res = minimize_scalar(lambda r: direct([r]), bounds=(-20, 20),
                          method="bounded", options={"xatol": 1e-10})
    fit = fit_gam(data, "gaussian", design)
    assert np.log(fit.lambda_hat[0]) == pytest.approx(res.x, abs=1e-3)


def test_two_smooth_additive_fit():
    rng = np.random.default_rng(10)
    n = 500
    X = rng.uniform(size=(n, 2))
    eta = np.sin(2 * np.pi * X[:, 0]) + 2.0 * (X[:, 1] - 0.5)
    y = eta + rng.normal(0, 0.7, size=n)
    data = from_arrays(y, X, np.arange(n))
    design = build_design(data.X, num_basis=8, support=(0.0, 1.0))
    assert design.intercept and design.num_smooths == 2
    fit = fit_gam(data, "gaussian", design)
    assert fit.lambda_hat.shape == (2,)
    grid = np.linspace(0.05, 0.95, 50)
    f0 = design.smooth_value(fit.beta, grid, 0)
    target = np.sin(2 * np.pi * grid)
    # sum-to-zero centering only changes the level
    assert np.std((f0 - target) - np.mean(f0 - target)) < 0.2


def test_optimum_no_worse_than_start():
    data, design = make_dataset(family="poisson", seed=12, m=8)
    fit = fit_gam(data, "poisson", design)
    start_value = gam_laml(np.zeros(1), data, "poisson", design)
    assert fit.laml <= start_value + 1e-9 * (1 + abs(start_value))
