import warnings

import numpy as np
import pytest

from vgpencr.grouped_model import GroupedDesign, GroupSpec, center


def random_grouped_data(rng, n=None, sizes=None, signal=1.0, noise=1.0):
    """Small random regression problem with a grouped design."""
    if sizes is None:
        G = int(rng.integers(2, 6))
        sizes = tuple(int(s) for s in rng.integers(1, 4, size=G))
    spec = GroupSpec(tuple(sizes))
    n = n or int(rng.integers(spec.p + 5, spec.p + 40))
    X = rng.standard_normal((n, spec.p))
    beta = np.zeros(spec.p)
    beta[spec.slice(0)] = signal * rng.standard_normal(spec.sizes[0])
    y = X @ beta + noise * rng.standard_normal(n) + 3.0
    return y, GroupedDesign(X, spec)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def small_data(rng):
    y, design = random_grouped_data(rng, n=40, sizes=(2, 3, 1, 2))
    return center(y, design)


@pytest.fixture(autouse=True)
def _quiet_convergence_warnings():
    from vgpencr.errors import NotConvergedWarning

    with warnings.catch_warnings():
        warnings.simplefilter("default", NotConvergedWarning)
        yield
