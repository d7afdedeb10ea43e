"""Volumetric rendering: transmittance compositing, screen-space normals and
the shadow-modulated SH shading, all differentiable end to end.

The pixel colour is S * (A (.) L b(N)): albedo A, shadow S and the density
gradients behind the normal N are composited in screen space with the same
transmittance weights, shading happens once per ray, and the final colour is
clamped at zero only after compositing.
"""

from dataclasses import dataclass

import numpy as np

from . import sh
from .autodiff import Node, Tape, ops
from .cameras import Camera, generate_rays, ray_sphere_interval
from .fields import SceneModel
from .sampling import importance_depths, stratified_depths

NORMAL_EPS = 1e-8
VACUUM_WEIGHT_EPS = 1e-4


class RenderDomainError(ValueError):
    """Negative density or negative step sizes fed into compositing."""


@dataclass(frozen=True)
class RenderConfig:
    n_coarse: int = 32
    n_fine: int = 64
    dtype: type = np.float64


@dataclass
class RenderBatch:
    """Per-ray composited outputs (arrays) plus live tape nodes for training."""

    color: np.ndarray  # (R, 3) clamped at 0
    color_raw: np.ndarray  # (R, 3) pre-clamp
    albedo: np.ndarray  # (R, 3)
    normal: np.ndarray  # (R, 3) unit or zero
    shadow: np.ndarray  # (R,)
    weights: np.ndarray  # (R, N)
    accumulated_alpha: np.ndarray  # (R,)
    expected_depth: np.ndarray  # (R,)
    t_vals: np.ndarray  # (R, N)
    nodes: dict | None = None


@dataclass
class RenderResult:
    coarse: RenderBatch
    fine: RenderBatch | None
    tape: Tape

    @property
    def final(self) -> RenderBatch:
        return self.fine if self.fine is not None else self.coarse


def composite(values: np.ndarray, sigma: np.ndarray, delta: np.ndarray):
    """Reference transmittance compositing (plain numpy).

    values: (N,) or (N, C); sigma, delta: (N,). Returns (accumulated, weights)
    with w_i = T_i * (1 - exp(-sigma_i delta_i)), T_i the exclusive prefix
    transmittance.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(sigma < 0):
        raise RenderDomainError("negative density")
    if np.any(delta < 0):
        raise RenderDomainError("negative delta")
    p = sigma * delta
    t_trans = np.exp(-np.concatenate([[0.0], np.cumsum(p)[:-1]]))
    alpha = 1.0 - np.exp(-p)
    w = t_trans * alpha
    vals = np.asarray(values, dtype=np.float64)
    acc = (w[:, None] * vals).sum(axis=0) if vals.ndim == 2 else (w * vals).sum()
    return acc, w


def surface_normal(sigma_grads: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Accumulated outward normal: normalize(sum_i w_i * (-grad sigma_i));
    zero when the accumulation is negligible."""
    g = np.asarray(sigma_grads, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    n_hat = (w[:, None] * (-g)).sum(axis=0) if g.ndim == 2 else -w * g
    nrm = np.linalg.norm(n_hat)
    if nrm < NORMAL_EPS:
        return np.zeros(3)
    return n_hat / nrm


def _depth_deltas(t_vals: np.ndarray, t_far: np.ndarray) -> np.ndarray:
    """delta_i = t_{i+1} - t_i, last delta = far - t_N (per-ray far)."""
    delta = np.empty_like(t_vals)
    delta[:, :-1] = np.diff(t_vals, axis=1)
    delta[:, -1] = t_far - t_vals[:, -1]
    return np.maximum(delta, 0.0)


def _render_core(tape: Tape, model: SceneModel, origins, dirs, t_vals, t_far,
                 hit, iteration: int, light_rows: Node, lg_rows: Node, tag: str,
                 shadow_override: float | None = None) -> dict:
    """Build the differentiable render graph for one pass; returns node dict."""
    r, n = t_vals.shape
    x = origins[:, None, :] + t_vals[:, :, None] * dirs[:, None, :]
    # rays that miss the sphere query the origin with zero extent
    x = np.where(hit[:, None, None], x, 0.0)
    rad = np.linalg.norm(x.reshape(-1, 3), axis=1)
    scale = np.minimum(1.0, 1.0 / np.maximum(rad, 1e-12))  # numeric safety clamp
    x = (x.reshape(-1, 3) * scale[:, None]).reshape(r, n, 3)
    delta = _depth_deltas(t_vals, t_far) * hit[:, None]

    xn = tape.input(f"x_{tag}", x.reshape(-1, 3))
    enc = model.encode(tape, xn, iteration)
    sigma, albedo = model.density_nodes(tape, enc)
    sigma_grad = tape.input_gradient(sigma, xn)

    sigma_r = ops.reshape(sigma, (r, n))
    delta_c = tape.constant(delta)
    p = ops.mul(sigma_r, delta_c)
    trans = ops.exp(ops.neg(ops.cumsum_exclusive(p, axis=1)))
    alpha = ops.sub(ops.ones_like_node(p), ops.exp(ops.neg(p)))
    w = ops.mul(trans, alpha)  # (R, N)
    w3 = ops.reshape(w, (r, n, 1))

    alb_acc = ops.sum_(ops.mul(w3, ops.reshape(albedo, (r, n, 3))), axis=1)
    nhat = ops.sum_(ops.mul(w3, ops.neg(ops.reshape(sigma_grad, (r, n, 3)))), axis=1)
    norm2 = ops.sum_(ops.square(nhat), axis=1, keepdims=True)
    normal = ops.div(nhat, ops.sqrt(ops.add(norm2, tape.constant(NORMAL_EPS**2))))

    basis = sh.sh_basis_node(normal)  # (R, 9)
    l_r = ops.reshape(light_rows, (r, 9, 3))
    irr = ops.sum_(ops.mul(ops.reshape(basis, (r, 9, 1)), l_r), axis=1)  # (R, 3)

    if shadow_override is None:
        lg_flat = ops.repeat_rows(lg_rows, n)
        s_samples = model.shadow_node(tape, enc, lg_flat)
        shadow = ops.sum_(ops.mul(w, ops.reshape(s_samples, (r, n))), axis=1)
    else:
        shadow = ops.mul(ops.sum_(w, axis=1),
                         tape.constant(np.full(r, shadow_override, dtype=tape.dtype)))

    color_raw = ops.mul(ops.mul(ops.reshape(shadow, (r, 1)), alb_acc), irr)
    color = ops.clamp_min(color_raw, 0.0)
    acc = ops.sum_(w, axis=1)
    depth = ops.sum_(ops.mul(w, tape.constant(t_vals * hit[:, None])), axis=1)

    return {
        "color": color, "color_raw": color_raw, "albedo": alb_acc,
        "normal": normal, "shadow": shadow, "weights": w,
        "accumulated_alpha": acc, "expected_depth": depth, "t_vals": t_vals,
    }


def _batch_from_nodes(nodes: dict) -> RenderBatch:
    w = nodes["weights"].value
    normal = nodes["normal"].value.copy()
    normal[w.sum(axis=1) < VACUUM_WEIGHT_EPS] = 0.0
    return RenderBatch(
        color=nodes["color"].value.copy(),
        color_raw=nodes["color_raw"].value.copy(),
        albedo=nodes["albedo"].value.copy(),
        normal=normal,
        shadow=nodes["shadow"].value.copy(),
        weights=w.copy(),
        accumulated_alpha=nodes["accumulated_alpha"].value.copy(),
        expected_depth=nodes["expected_depth"].value.copy(),
        t_vals=nodes["t_vals"],
        nodes=nodes,
    )


def render_rays(
    model: SceneModel,
    origins: np.ndarray,
    dirs: np.ndarray,
    light,
    iteration: int,
    rng: np.random.Generator,
    cfg: RenderConfig = RenderConfig(),
    mode: str = "hierarchical",
    near: float | None = None,
    far: float | None = None,
    image_indices: np.ndarray | None = None,
    lg_jitter_std: float | None = None,
    shadow_override: float | None = None,
    tape: Tape | None = None,
) -> RenderResult:
    """Two-pass hierarchical render of a ray batch.

    `light` is either an SHLighting applied to every ray, or None with
    `image_indices` set, in which case per-ray rows of the learnable sh_table
    are gathered (training path; gradients flow only into each ray's own
    image row). `lg_jitter_std` adds the training-time lighting-input noise
    to the shadow network's grey SH input.
    """
    if mode not in ("hierarchical", "coarse"):
        raise ValueError(f"unknown mode {mode!r}")
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    r = origins.shape[0]
    if near is None or far is None:
        raise ValueError("near and far are required")
    if tape is None:
        tape = Tape(model.store, dtype=cfg.dtype)

    if image_indices is not None:
        table = tape.param("sh_table")
        light_rows = ops.gather_rows(table, np.asarray(image_indices, dtype=np.int64))
        l3 = ops.reshape(light_rows, (r, 9, 3))
        lg_rows = ops.mul(ops.sum_(l3, axis=2), tape.constant(1.0 / 3.0))
    else:
        if not isinstance(light, sh.SHLighting):
            raise TypeError("light must be an SHLighting when image_indices is None")
        rows = np.broadcast_to(light.coeffs.reshape(-1), (r, 27)).copy()
        light_rows = tape.constant(rows)
        lg_rows = tape.constant(np.broadcast_to(light.to_grey(), (r, 9)).copy())
    if lg_jitter_std is not None:
        noise = rng.normal(0.0, lg_jitter_std, size=(r, 9))
        lg_rows = ops.add(lg_rows, tape.constant(noise))

    tn, tf, hit = ray_sphere_interval(origins, dirs, near, far)
    safe_far = np.where(hit, tf, tn + 1e-3)
    t_c = stratified_depths(tn, np.maximum(safe_far, tn + 1e-6), cfg.n_coarse, rng)
    coarse_nodes = _render_core(tape, model, origins, dirs, t_c, safe_far, hit,
                                iteration, light_rows, lg_rows, "coarse",
                                shadow_override)
    coarse = _batch_from_nodes(coarse_nodes)

    fine = None
    if mode == "hierarchical":
        w = coarse.weights
        t_all = importance_depths(t_c, np.maximum(w, 0.0), cfg.n_fine, rng)
        fine_nodes = _render_core(tape, model, origins, dirs, t_all, safe_far, hit,
                                  iteration, light_rows, lg_rows, "fine",
                                  shadow_override)
        fine = _batch_from_nodes(fine_nodes)
    return RenderResult(coarse=coarse, fine=fine, tape=tape)


@dataclass
class RenderOutput:
    """Single-pixel view of a RenderBatch row."""

    color: np.ndarray
    albedo: np.ndarray
    normal: np.ndarray
    shadow: float
    weights: np.ndarray
    accumulated_alpha: float
    expected_depth: float


def render_pixel(model: SceneModel, ray, light: sh.SHLighting, iteration: int,
                 mode: str = "hierarchical", rng: np.random.Generator | None = None,
                 cfg: RenderConfig = RenderConfig(), near: float = 0.05,
                 far: float = 4.0) -> tuple[RenderOutput, RenderOutput | None]:
    """Render one ray; returns (coarse, fine) outputs for supervision."""
    rng = rng or np.random.default_rng(0)
    res = render_rays(model, ray.origin[None], ray.dir[None], light, iteration,
                      rng, cfg, mode=mode, near=near, far=far)

    def pick(batch):
        if batch is None:
            return None
        return RenderOutput(
            color=batch.color[0], albedo=batch.albedo[0], normal=batch.normal[0],
            shadow=float(batch.shadow[0]), weights=batch.weights[0],
            accumulated_alpha=float(batch.accumulated_alpha[0]),
            expected_depth=float(batch.expected_depth[0]),
        )

    return pick(res.coarse), pick(res.fine)


def render_image(model: SceneModel, cam: Camera, light: sh.SHLighting, iteration: int,
                 cfg: RenderConfig = RenderConfig(), chunk: int = 1024,
                 seed: int = 0, mode: str = "hierarchical") -> dict:
    """Full-frame inference render; returns float buffers keyed by name."""
    rows, cols = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
    rows = rows.reshape(-1)
    cols = cols.reshape(-1)
    origins, dirs, _ = generate_rays(cam, rows, cols, jitter_on=False)
    n = rows.shape[0]
    bufs = {
        "color": np.zeros((n, 3), dtype=np.float32),
        "albedo": np.zeros((n, 3), dtype=np.float32),
        "normal": np.zeros((n, 3), dtype=np.float32),
        "shadow": np.zeros(n, dtype=np.float32),
        "depth": np.zeros(n, dtype=np.float32),
        "alpha": np.zeros(n, dtype=np.float32),
    }
    rng = np.random.default_rng(seed)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        res = render_rays(model, origins[lo:hi], dirs[lo:hi], light, iteration, rng,
                          cfg, mode=mode, near=cam.near, far=cam.far)
        fb = res.final
        bufs["color"][lo:hi] = fb.color
        bufs["albedo"][lo:hi] = fb.albedo
        bufs["normal"][lo:hi] = fb.normal
        bufs["shadow"][lo:hi] = fb.shadow
        bufs["depth"][lo:hi] = fb.expected_depth
        bufs["alpha"][lo:hi] = fb.accumulated_alpha
    out = {k: v.reshape(cam.height, cam.width, -1).squeeze() for k, v in bufs.items()}
    return out


def save_render_buffers(base_path, buffers: dict, far: float, with_pfm: bool = False) -> None:
    """8-bit PNGs (+ optional lossless PFMs) with the standard suffixes."""
    from pathlib import Path

    from . import imgio

    base = Path(base_path)
    stem = base.with_suffix("")
    imgio.write_png(base.with_suffix(".png"), buffers["color"])
    imgio.write_png(f"{stem}_albedo.png", buffers["albedo"])
    imgio.write_png(f"{stem}_normal.png", 0.5 * (buffers["normal"] + 1.0))
    imgio.write_png(f"{stem}_shadow.png", buffers["shadow"])
    imgio.write_png(f"{stem}_depth.png", buffers["depth"] / far)
    if with_pfm:
        imgio.write_pfm(f"{stem}.pfm", buffers["color"])
        for k in ("albedo", "normal", "shadow", "depth"):
            arr = buffers[k]
            if arr.ndim == 2:
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            imgio.write_pfm(f"{stem}_{k}.pfm", arr)
