import numpy as np
import pytest

from decorrgnn import tensor as T


def central_diff_check(build_loss, params, rel_tol=1e-4, h=1e-5):
    """Compare tape gradients of a scalar loss with central differences.

    ``build_loss`` must rebuild the forward pass from the params' current
    ``data`` on every call; the analytic gradient is taken once, then each
    parameter entry is perturbed in place.
    """
    loss = build_loss()
    T.grad(loss)
    for p in params:
        assert p.grad is not None, "parameter received no gradient"
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(build_loss().data)
            flat[i] = orig - h
            down = float(build_loss().data)
            flat[i] = orig
            numeric.ravel()[i] = (up - down) / (2 * h)
        denom = np.maximum(np.abs(numeric), 1.0)
        rel = np.abs(analytic - numeric) / denom
        assert rel.max() < rel_tol, f"max rel grad error {rel.max():.3e}"


@pytest.fixture
def fd_check():
    return central_diff_check


def random_symmetric_adjacency(rng, n, p=0.4):
    a = (rng.random((n, n)) < p).astype(float)
    a = np.triu(a, 1)
    return a + a.T


@pytest.fixture
def make_adjacency():
    return random_symmetric_adjacency
