"""Depth sampling along rays: stratified bins and inverse-CDF importance."""

import numpy as np


def stratified_depths(near, far, n: int, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw per equal-width bin of [near, far]; ascending.

    near/far may be scalars or (R,) arrays; returns (n,) or (R, n).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    near = np.asarray(near, dtype=np.float64)
    far = np.asarray(far, dtype=np.float64)
    if np.any(near >= far):
        raise ValueError("near must be < far")
    batched = near.ndim > 0
    r = near.shape[0] if batched else 1
    u = rng.uniform(size=(r, n))
    edges = np.linspace(0.0, 1.0, n + 1)[:-1]
    frac = edges[None, :] + u / n
    out = near.reshape(-1, 1) + frac * (far - near).reshape(-1, 1)
    return out if batched else out[0]


def importance_depths(coarse_t: np.ndarray, coarse_weights: np.ndarray, n_fine: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF samples from the piecewise-constant pdf over coarse bins,
    merged with the coarse depths and sorted.

    Bin i is centred on coarse depth t_i (edges at neighbouring midpoints)
    and carries weight w_i. Rays whose weights sum to ~0 fall back to
    stratified sampling over the coarse span.
    """
    t = np.atleast_2d(np.asarray(coarse_t, dtype=np.float64))
    w = np.atleast_2d(np.asarray(coarse_weights, dtype=np.float64))
    if t.shape != w.shape:
        raise ValueError(f"depths {t.shape} and weights {w.shape} must match")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    single = np.asarray(coarse_t).ndim == 1
    r, n = t.shape

    mids = 0.5 * (t[:, 1:] + t[:, :-1])
    edges = np.concatenate([t[:, :1], mids, t[:, -1:]], axis=1)  # (R, N+1)
    widths = edges[:, 1:] - edges[:, :-1]

    wsum = w.sum(axis=1, keepdims=True)
    degenerate = wsum[:, 0] <= 1e-12
    pdf = np.where(degenerate[:, None], widths / widths.sum(axis=1, keepdims=True),
                   w / np.where(wsum <= 1e-12, 1.0, wsum))
    cdf = np.concatenate([np.zeros((r, 1)), np.cumsum(pdf, axis=1)], axis=1)
    cdf[:, -1] = 1.0

    u = rng.uniform(size=(r, n_fine))
    idx = np.empty((r, n_fine), dtype=np.int64)
    for i in range(r):  # searchsorted has no batched form
        idx[i] = np.searchsorted(cdf[i], u[i], side="right") - 1
    idx = np.clip(idx, 0, n - 1)
    c_lo = np.take_along_axis(cdf, idx, axis=1)
    c_hi = np.take_along_axis(cdf, idx + 1, axis=1)
    denom = np.where(c_hi - c_lo < 1e-12, 1.0, c_hi - c_lo)
    frac = (u - c_lo) / denom
    e_lo = np.take_along_axis(edges, idx, axis=1)
    e_hi = np.take_along_axis(edges, idx + 1, axis=1)
    fine = e_lo + frac * (e_hi - e_lo)

    merged = np.sort(np.concatenate([t, fine], axis=1), axis=1)
    return merged[0] if single else merged
