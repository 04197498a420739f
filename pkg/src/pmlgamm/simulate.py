"""Synthetic grouped data from the additive mixed model.

Groups draw a shared intercept u_i ~ N(0, sigma^2); covariates are
uniform on (0, 1); responses come from the chosen family with linear
predictor f(x) + u. Everything is a pure function of the seed.
"""

import numpy as np

from .data import from_arrays
from .errors import ConfigurationError
from .families import get_family

TRUE_FUNCTIONS = {
    "sin2pi": lambda x: np.sin(2.0 * np.pi * x),
    "linear": lambda x: 2.0 * x - 1.0,
    "flat": lambda x: np.zeros_like(x),
}


def true_function(name):
    if callable(name):
        return name
    try:
        return TRUE_FUNCTIONS[str(name)]
    except KeyError:
        raise ConfigurationError(
            f"unknown true function {name!r}; available: {sorted(TRUE_FUNCTIONS)}"
        ) from None


def simulate_dataset(m, n, sigma_true, f_true="sin2pi", family="poisson",
                     seed=0, return_intercepts=False):
    """Draw ``m`` equal-sized groups of ``n`` observations.

    ``seed`` may be an integer or a ``numpy.random.SeedSequence``; the
    same seed always reproduces the same dataset bit for bit. Draw order
    is fixed: intercepts, then covariates, then responses. With
    ``return_intercepts`` the realized group intercepts are returned
    alongside the dataset.
    """
    if m < 1 or n < 1:
        raise ConfigurationError("m and n must be at least 1")
    if sigma_true < 0:
        raise ConfigurationError("sigma_true must be nonnegative")
    family = get_family(family)
    f = true_function(f_true)
    if isinstance(seed, np.random.SeedSequence):
        rng = np.random.default_rng(seed)
    else:
        rng = np.random.default_rng(int(seed))
    u = (rng.normal(0.0, sigma_true, size=m) if sigma_true > 0
         else np.zeros(m))
    x = rng.uniform(size=(m, n))
    eta = f(x) + u[:, None]
    y = family.sample(rng, eta)
    groups = np.repeat(np.arange(1, m + 1), n)
    data = from_arrays(y.ravel(), x.ravel(), groups)
    return (data, u) if return_intercepts else data
