import math

import numpy as np
import pytest

from pmlgamm import DomainError, get_family, log_density, log_density_derivs

from oracles import central_gradient

FAMILY_POINTS = {
    "gaussian": [(0.0, 0.0), (1.0, 0.3), (-2.5, 1.7), (4.0, -2.0)],
    "poisson": [(0.0, 0.0), (2.0, 0.5), (7.0, 1.5), (1.0, -2.0)],
    "bernoulli": [(0.0, 0.0), (1.0, 0.7), (0.0, -1.4), (1.0, 2.5)],
}


def test_gaussian_log_density_at_zero():
    assert log_density("gaussian", 0.0, 0.0) == pytest.approx(
        -0.5 * math.log(2 * math.pi), abs=1e-12)


def test_poisson_log_density_zero_count_unit_mean():
    assert log_density("poisson", 0.0, 0.0) == pytest.approx(-1.0, abs=1e-12)


def test_bernoulli_log_density_even_odds():
    assert log_density("bernoulli", 1.0, 0.0) == pytest.approx(
        math.log(0.5), abs=1e-12)


def test_gaussian_first_derivative_is_residual():
    assert log_density_derivs("gaussian", 1.0, 0.0, 1) == pytest.approx(1.0)


def test_poisson_second_derivative_is_negative_mean():
    assert log_density_derivs("poisson", 2.0, 0.0, 2) == pytest.approx(-1.0)


def test_bernoulli_third_derivative_vanishes_at_even_odds():
    # p(1-p)(1-2p) = 0 at p = 1/2; agreeing finite differences checked below
    assert log_density_derivs("bernoulli", 0.0, 0.0, 3) == pytest.approx(
        0.0, abs=1e-12)


@pytest.mark.parametrize("name", sorted(FAMILY_POINTS))
@pytest.mark.parametrize("order", [1, 2, 3])
def test_derivatives_match_finite_differences(name, order):
    fam = get_family(name)
    step = 2e-3 if order == 3 else 1e-5
    for y, eta in FAMILY_POINTS[name]:
        if order == 1:
            fd = central_gradient(lambda e: fam.log_density(y, e[0]),
                                  np.array([eta]), step)[0]
        elif order == 2:
            fd = central_gradient(lambda e: fam.d1(y, e[0]),
                                  np.array([eta]), step)[0]
        else:
            fd = central_gradient(lambda e: fam.d2(y, e[0]),
                                  np.array([eta]), step)[0]
        exact = fam.deriv(y, eta, order)
        assert exact == pytest.approx(fd, rel=1e-6, abs=1e-6)


def test_gaussian_log_density_exactly_quadratic():
    fam = get_family("gaussian")
    etas = np.linspace(-5, 5, 41)
    assert np.all(fam.d3(1.3, etas) == 0.0)


@pytest.mark.parametrize("name", ["poisson", "bernoulli"])
def test_counting_families_concave_in_eta(name):
    fam = get_family(name)
    etas = np.linspace(-8, 8, 81)
    for y in (0.0, 1.0, 3.0) if name == "poisson" else (0.0, 1.0):
        assert np.all(fam.d2(y, etas) <= 0.0)


def test_log_density_finite_on_wide_eta_range():
    for name, ys in (("gaussian", (0.0, 3.5)), ("poisson", (0.0, 6.0)),
                     ("bernoulli", (0.0, 1.0))):
        fam = get_family(name)
        etas = np.linspace(-30, 30, 121)
        for y in ys:
            assert np.all(np.isfinite(fam.log_density(y, etas)))


@pytest.mark.parametrize("name,bad", [
    ("poisson", -1.0),
    ("poisson", 2.5),
    ("bernoulli", 2.0),
    ("bernoulli", 0.5),
    ("gaussian", np.inf),
])
def test_invalid_responses_rejected(name, bad):
    with pytest.raises(DomainError):
        log_density(name, bad, 0.0)


def test_derivative_order_out_of_contract():
    fam = get_family("gaussian")
    with pytest.raises(ValueError):
        fam.deriv(0.0, 0.0, 4)
    with pytest.raises(ValueError):
        fam.deriv(0.0, 0.0, 0)


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        get_family("gamma")


def test_sampling_matches_mean(rng):
    for name in ("gaussian", "poisson", "bernoulli"):
        fam = get_family(name)
        eta = np.full(200_000, 0.4)
        draws = fam.sample(rng, eta)
        assert np.mean(draws) == pytest.approx(float(fam.mean(0.4)), rel=2e-2)
        fam.validate_response(draws)
