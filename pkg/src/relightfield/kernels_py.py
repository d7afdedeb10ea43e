"""Pure-numpy implementations of the training hot kernels.

This is the fallback backend; `relightfield._kernels_cy` provides the
compiled twin with the same signatures. Both are exercised by the backend
parity tests and by scripts/bench_kernels.py.
"""

import numpy as np

BACKEND_NAME = "python"


def softplus(x: np.ndarray) -> np.ndarray:
    """Numerically stable log(1 + exp(x))."""
    return np.logaddexp(0.0, x).astype(x.dtype, copy=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sincos(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.sin(x), np.cos(x)


def adam_step(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    t: int,
) -> None:
    """In-place Adam update with bias correction."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    step = lr / bc1
    denom = np.sqrt(v / bc2)
    denom += eps
    p -= step * (m / denom)
