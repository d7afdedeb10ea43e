import numpy as np
import pytest


def central_diff(f, x, h=1e-5):
    """Central finite differences of scalar f w.r.t. every element of x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def assert_close_rel(actual, expected, rtol, floor=1.0):
    """|a-e| <= rtol * max(|a|, |e|, floor), elementwise."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(actual), np.abs(expected)), floor)
    err = np.abs(actual - expected) / scale
    assert err.max() <= rtol, f"max rel err {err.max():.3e} > {rtol:.1e}"


@pytest.fixture
def rng():
    return np.random.default_rng(0)
