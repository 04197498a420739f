"""Response families with canonical links and log-density derivatives.

Each family exposes the log density ``log ψ(y; η)`` as a function of the
linear predictor ``η`` together with its first three derivatives in ``η``.
Third derivatives are what the exact score of the adaptive-quadrature
objective needs, because the per-group mode and curvature are implicit
functions of the model parameters.

All methods broadcast over numpy arrays and accept scalars.
"""

import math
from abc import ABC, abstractmethod

import numpy as np
from scipy.special import expit, gammaln

from .errors import DomainError

_LOG_2PI = math.log(2.0 * math.pi)


class Family(ABC):
    """Base class for response distributions with a canonical link.

    Subclasses implement ``log_density`` and the derivatives ``d1``,
    ``d2``, ``d3`` of the log density with respect to the linear
    predictor. All families here are log-concave in ``η`` (``d2 <= 0``),
    which the mode-finding routines rely on.
    """

    name: str = "base"

    @abstractmethod
    def validate_response(self, y) -> None:
        """Raise :class:`DomainError` if ``y`` is invalid for the family."""

    @abstractmethod
    def log_density(self, y, eta):
        """log ψ(y; η) under the canonical link."""

    @abstractmethod
    def d1(self, y, eta):
        """∂/∂η log ψ(y; η)."""

    @abstractmethod
    def d2(self, y, eta):
        """∂²/∂η² log ψ(y; η)."""

    @abstractmethod
    def d3(self, y, eta):
        """∂³/∂η³ log ψ(y; η)."""

    @abstractmethod
    def mean(self, eta):
        """Inverse link: E[y | η]."""

    @abstractmethod
    def sample(self, rng, eta):
        """Draw responses with linear predictor ``eta`` using ``rng``."""

    def deriv(self, y, eta, order: int):
        """Dispatch to ``d1``/``d2``/``d3``; ``order`` must be 1, 2 or 3."""
        if order == 1:
            return self.d1(y, eta)
        if order == 2:
            return self.d2(y, eta)
        if order == 3:
            return self.d3(y, eta)
        raise ValueError(f"derivative order must be 1, 2 or 3, got {order}")

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(Family):
    """Normal responses with unit standard deviation and identity link.

    log ψ(y; η) = −½ log(2π) − (y − η)²/2. The log density is exactly
    quadratic in η, so the third derivative vanishes and one-point
    adaptive quadrature is already exact.
    """

    name = "gaussian"

    def validate_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("gaussian responses must be finite")

    def log_density(self, y, eta):
        y = np.asarray(y, dtype=float)
        r = y - eta
        return -0.5 * _LOG_2PI - 0.5 * r * r

    def d1(self, y, eta):
        return np.asarray(y, dtype=float) - eta

    def d2(self, y, eta):
        return np.broadcast_arrays(np.asarray(y, dtype=float), eta)[0] * 0.0 - 1.0

    def d3(self, y, eta):
        return np.broadcast_arrays(np.asarray(y, dtype=float), eta)[0] * 0.0

    def mean(self, eta):
        return np.asarray(eta, dtype=float)

    def sample(self, rng, eta):
        eta = np.asarray(eta, dtype=float)
        return rng.normal(eta, 1.0)


class Poisson(Family):
    """Poisson counts with log link.

    log ψ(y; η) = yη − e^η − log y!, with derivatives
    d1 = y − e^η, d2 = d3 = −e^η.
    """

    name = "poisson"

    def validate_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("poisson responses must be finite")
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise DomainError("poisson responses must be nonnegative integers")

    def log_density(self, y, eta):
        y = np.asarray(y, dtype=float)
        return y * eta - np.exp(eta) - gammaln(y + 1.0)

    def d1(self, y, eta):
        return np.asarray(y, dtype=float) - np.exp(eta)

    def d2(self, y, eta):
        return -np.exp(np.broadcast_arrays(eta, np.asarray(y, dtype=float))[0])

    def d3(self, y, eta):
        return self.d2(y, eta)

    def mean(self, eta):
        return np.exp(eta)

    def sample(self, rng, eta):
        return rng.poisson(np.exp(np.asarray(eta, dtype=float))).astype(float)


class Bernoulli(Family):
    """Bernoulli responses with logit link.

    With p = expit(η): log ψ = yη − log(1 + e^η), d1 = y − p,
    d2 = −p(1−p), d3 = −p(1−p)(1−2p).
    """

    name = "bernoulli"

    def validate_response(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DomainError("bernoulli responses must be 0 or 1")

    def log_density(self, y, eta):
        y = np.asarray(y, dtype=float)
        # -log(1+e^eta) computed stably for large |eta|
        return y * eta - np.logaddexp(0.0, eta)

    def d1(self, y, eta):
        return np.asarray(y, dtype=float) - expit(eta)

    def d2(self, y, eta):
        p = expit(np.broadcast_arrays(eta, np.asarray(y, dtype=float))[0])
        return -p * (1.0 - p)

    def d3(self, y, eta):
        p = expit(np.broadcast_arrays(eta, np.asarray(y, dtype=float))[0])
        return -p * (1.0 - p) * (1.0 - 2.0 * p)

    def mean(self, eta):
        return expit(eta)

    def sample(self, rng, eta):
        p = expit(np.asarray(eta, dtype=float))
        return (rng.random(p.shape) < p).astype(float)


FAMILIES = {
    "gaussian": Gaussian,
    "poisson": Poisson,
    "bernoulli": Bernoulli,
}


def get_family(name) -> Family:
    """Look up a family by name; instances pass through unchanged."""
    if isinstance(name, Family):
        return name
    try:
        return FAMILIES[str(name).lower()]()
    except KeyError:
        raise ValueError(
            f"unknown family {name!r}; available: {sorted(FAMILIES)}"
        ) from None


def log_density(family, y, eta):
    """log ψ(y; η) after validating the response."""
    family = get_family(family)
    family.validate_response(y)
    return family.log_density(y, eta)


def log_density_derivs(family, y, eta, order: int):
    """Derivative of log ψ with respect to η, ``order`` in 1..3."""
    family = get_family(family)
    family.validate_response(y)
    return family.deriv(y, eta, order)
