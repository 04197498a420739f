import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pmlgamm import build_design, from_arrays, get_family  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20260811)


def make_dataset(family="poisson", m=6, sizes=None, seed=0, beta_scale=0.6,
                 sigma=1.0, num_basis=8):
    """Small grouped dataset with a smooth signal, plus its design.

    Returns (data, design, beta_true) with the basis built on the fixed
    unit interval.
    """
    rng = np.random.default_rng(seed)
    fam = get_family(family)
    sizes = [4, 3, 5, 4, 6, 3][:m] if sizes is None else list(sizes)
    while len(sizes) < m:
        sizes.append(int(rng.integers(3, 7)))
    x = rng.uniform(0.02, 0.98, size=int(np.sum(sizes)))
    groups = np.repeat(np.arange(m), sizes)
    u = rng.normal(0.0, sigma, size=m)
    eta = np.sin(2.0 * np.pi * x) * beta_scale + u[groups]
    y = fam.sample(rng, eta)
    data = from_arrays(y, x, groups)
    design = build_design(data.X, num_basis=num_basis, support=(0.0, 1.0))
    return data, design
