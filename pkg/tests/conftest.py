import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_psd(rng, n, rank=None):
    """A random symmetric PSD matrix with nontrivial off-diagonal mass."""
    rank = rank if rank is not None else n
    G = rng.standard_normal((n, rank))
    A = G @ G.T / rank
    # Lift the diagonal a touch so extracted correlations stay finite.
    return A + 0.05 * np.eye(n)
