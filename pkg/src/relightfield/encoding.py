"""Annealed sinusoidal positional encoding over the unit sphere.

Band k (0-indexed, frequency 2^k) is scaled by
    beta_k = 0.5 * (1 - cos(pi * clamp(alpha + n_freq_min - k, 0, 1))),
    alpha  = (n_freq_max - n_freq_min) * iteration / n_anneal_iters,
so the first n_freq_min bands are active from the start and the remaining
bands fade in over the annealing window. The raw xyz passthrough is never
attenuated.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Node, ops
from .backend import kernels


class OutOfBoundsError(ValueError):
    """Query point lies outside the unit sphere (the field's domain)."""


@dataclass(frozen=True)
class EncoderConfig:
    n_freq_max: int = 12
    n_freq_min: int = 8
    n_anneal_iters: int = 30_000

    def __post_init__(self):
        if not (0 <= self.n_freq_min <= self.n_freq_max):
            raise ValueError("need 0 <= n_freq_min <= n_freq_max")
        if self.n_anneal_iters <= 0:
            raise ValueError("n_anneal_iters must be positive")

    @property
    def out_dim(self) -> int:
        return 3 + 2 * 3 * self.n_freq_max

    @property
    def freqs(self) -> np.ndarray:
        return 2.0 ** np.arange(self.n_freq_max)


def anneal_weights(cfg: EncoderConfig, iteration: int) -> np.ndarray:
    """Per-band annealing coefficients beta_k at a training iteration."""
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    alpha = (cfg.n_freq_max - cfg.n_freq_min) * iteration / cfg.n_anneal_iters
    k = np.arange(cfg.n_freq_max)
    t = np.clip(alpha + cfg.n_freq_min - k, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * t))


def check_in_unit_sphere(x: np.ndarray, tol: float = 1e-6) -> None:
    r2 = np.einsum("ij,ij->i", x, x)
    if np.any(r2 > (1.0 + tol) ** 2):
        worst = float(np.sqrt(r2.max()))
        raise OutOfBoundsError(f"point outside unit sphere: |x| = {worst:.4f}")


def positional_encode(x: np.ndarray, iteration: int, cfg: EncoderConfig) -> np.ndarray:
    """Numpy encoding of points (N,3) inside the unit sphere."""
    x = np.atleast_2d(np.asarray(x))
    check_in_unit_sphere(x)
    betas = anneal_weights(cfg, iteration).astype(x.dtype)
    freqs = cfg.freqs.astype(x.dtype)
    args = x[:, None, :] * freqs[None, :, None]
    s, c = kernels.sincos(args)
    b = betas[None, :, None]
    out = np.empty((x.shape[0], cfg.out_dim), dtype=x.dtype)
    out[:, :3] = x
    out[:, 3:] = np.concatenate([s * b, c * b], axis=2).reshape(x.shape[0], -1)
    return out


def encode_node(x: Node, iteration: int, cfg: EncoderConfig) -> Node:
    """Tape encoding (same layout as positional_encode); the posenc primitive
    keeps the whole chain twice differentiable."""
    check_in_unit_sphere(np.atleast_2d(x.value))
    return ops.posenc(x, cfg.freqs, anneal_weights(cfg, iteration))
