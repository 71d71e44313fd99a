import numpy as np
import pytest


def random_spd(rng, n, dof=None):
    dof = dof or 2 * n
    x = rng.standard_normal((n, dof))
    return x @ x.T / dof


def random_invertible(rng, n, max_cond=10.0):
    """U diag(s) W^T with singular values in [1, max_cond]."""
    u, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.exp(rng.uniform(0, np.log(max_cond), n))
    s[0], s[-1] = 1.0, max_cond
    return u @ np.diag(s) @ w.T


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
