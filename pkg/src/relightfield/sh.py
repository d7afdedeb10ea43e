"""Real second-order spherical harmonics lighting.

Basis row order throughout: Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22
(band-major, m ascending). Lighting coefficients are 9x3 (rows = basis,
columns = RGB). The learnable per-image lighting uses the raw basis; the
Lambertian convolution constants exist only for environment-map fits so the
fitted coefficients are directly comparable to learned ones.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio
from .autodiff import Node, ops

Y00 = 0.28209479177387814  # 1/(2 sqrt(pi))
Y1 = 0.4886025119029199  # sqrt(3/(4 pi))
Y2_XY = 1.0925484305920792  # sqrt(15/(4 pi))
Y2_Z2 = 0.31539156525252005  # sqrt(5/(16 pi))
Y2_X2Y2 = 0.5462742152960396  # sqrt(15/(16 pi))

# Irradiance convolution per band for a Lambertian receiver.
LAMBERT_BAND = np.array([np.pi] + [2.0 * np.pi / 3.0] * 3 + [np.pi / 4.0] * 5)

N_COEFFS = 9


class EnvMapError(ValueError):
    """Malformed or unusable environment map data."""


class NormalizationError(ValueError):
    """Direction vector is not unit length."""


def sh_basis(n: np.ndarray) -> np.ndarray:
    """Evaluate the 9 real SH basis functions at unit directions.

    Accepts (3,) or (N, 3); raises NormalizationError when |n| deviates from
    1 by more than 1e-6.
    """
    arr = np.asarray(n, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    norms = np.linalg.norm(arr, axis=1)
    if not np.all(np.abs(norms - 1.0) <= 1e-6):
        worst = float(np.abs(norms - 1.0).max())
        raise NormalizationError(f"directions must be unit length (max |n|-1 = {worst:.2e})")
    x, y, z = arr[:, 0], arr[:, 1], arr[:, 2]
    b = np.stack(
        [
            np.full_like(x, Y00),
            Y1 * y,
            Y1 * z,
            Y1 * x,
            Y2_XY * x * y,
            Y2_XY * y * z,
            Y2_Z2 * (3.0 * z * z - 1.0),
            Y2_XY * x * z,
            Y2_X2Y2 * (x * x - y * y),
        ],
        axis=1,
    )
    return b[0] if single else b


def sh_basis_node(n: Node) -> Node:
    """Tape version of sh_basis for (R,3) normal nodes (polynomials only,
    twice differentiable). No unit-length check: callers normalize."""
    t = n.tape
    x = ops.narrow(n, 1, 0, 1)
    y = ops.narrow(n, 1, 1, 1)
    z = ops.narrow(n, 1, 2, 1)
    one = ops.mul(ops.ones_like_node(x), t.constant(Y00))
    cols = [
        one,
        ops.mul(y, t.constant(Y1)),
        ops.mul(z, t.constant(Y1)),
        ops.mul(x, t.constant(Y1)),
        ops.mul(ops.mul(x, y), t.constant(Y2_XY)),
        ops.mul(ops.mul(y, z), t.constant(Y2_XY)),
        ops.mul(ops.sub(ops.mul(ops.mul(z, z), t.constant(3.0)), ops.ones_like_node(z)),
                t.constant(Y2_Z2)),
        ops.mul(ops.mul(x, z), t.constant(Y2_XY)),
        ops.mul(ops.sub(ops.mul(x, x), ops.mul(y, y)), t.constant(Y2_X2Y2)),
    ]
    return ops.concat(cols, axis=1)


@dataclass
class SHLighting:
    """9x3 lighting coefficient matrix (rows = SH bands, columns = RGB)."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.shape != (N_COEFFS, 3):
            raise ValueError(f"SH lighting must be 9x3, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("SH lighting has non-finite entries")
        self.coeffs = c

    def to_grey(self) -> np.ndarray:
        return self.coeffs.mean(axis=1)

    def scaled(self, factor: float) -> "SHLighting":
        return SHLighting(self.coeffs * factor)

    def save_text(self, path) -> None:
        with open(path, "w") as f:
            for row in self.coeffs:
                f.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load_text(cls, path) -> "SHLighting":
        rows = []
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rows.append([float(v) for v in line.split()])
        arr = np.asarray(rows, dtype=np.float64)
        if arr.shape != (N_COEFFS, 3):
            raise ValueError(f"expected 9 lines x 3 floats, got {arr.shape}")
        return cls(arr)

    @classmethod
    def grey_ambient(cls, level: float = 0.5) -> "SHLighting":
        """DC-only grey light whose irradiance on any normal equals level."""
        c = np.zeros((N_COEFFS, 3))
        c[0, :] = level / Y00
        return cls(c)


def to_grey(light: SHLighting) -> np.ndarray:
    return light.to_grey()


def shade(albedo: np.ndarray, n: np.ndarray, light: SHLighting) -> np.ndarray:
    """albedo (.) (L^T b(n)) per channel; no clamping here."""
    b = sh_basis(n)
    return np.asarray(albedo, dtype=np.float64) * (b @ light.coeffs)


def jitter_grey(lg: np.ndarray, rng: np.random.Generator, std: float = 0.025,
                enabled: bool = True) -> np.ndarray:
    """Training-time lighting-input jitter: lg + eps, eps ~ N(0, std^2) iid."""
    lg = np.asarray(lg, dtype=np.float64)
    if lg.shape[-1] != N_COEFFS:
        raise ValueError(f"grey SH vector must have 9 entries, got {lg.shape}")
    if not enabled:
        return lg
    return lg + rng.normal(0.0, std, size=lg.shape)


@dataclass
class EnvMap:
    """Equirectangular radiance map; (u,v) maps to (longitude, colatitude)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise EnvMapError(f"environment map must be HxWx3, got {d.shape}")
        if d.shape[1] != 2 * d.shape[0]:
            raise EnvMapError(f"width must be 2x height, got {d.shape[1]}x{d.shape[0]}")
        if d.size == 0:
            raise EnvMapError("empty environment map")
        if not np.all(np.isfinite(d)):
            raise EnvMapError("environment map has non-finite values")
        self.data = d

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def directions(self) -> np.ndarray:
        """Unit direction per pixel, (H, W, 3); +z is the zenith (v=0)."""
        h, w = self.height, self.width
        theta = (np.arange(h) + 0.5) * np.pi / h  # colatitude
        phi = (np.arange(w) + 0.5) * 2.0 * np.pi / w  # longitude
        st, ct = np.sin(theta), np.cos(theta)
        cp, sp = np.cos(phi), np.sin(phi)
        d = np.empty((h, w, 3))
        d[:, :, 0] = st[:, None] * cp[None, :]
        d[:, :, 1] = st[:, None] * sp[None, :]
        d[:, :, 2] = np.broadcast_to(ct[:, None], (h, w))
        return d

    def solid_angles(self) -> np.ndarray:
        """Exact pixel solid angles, (H, W); sums to 4*pi."""
        h, w = self.height, self.width
        edges = np.cos(np.arange(h + 1) * np.pi / h)
        band = (edges[:-1] - edges[1:]) * (2.0 * np.pi / w)
        return np.broadcast_to(band[:, None], (h, w)).copy()

    @classmethod
    def load(cls, path) -> "EnvMap":
        p = Path(path)
        if p.suffix.lower() == ".pfm":
            img = imgio.read_pfm(p)
            if img.ndim == 2:
                img = np.repeat(img[:, :, None], 3, axis=2)
        else:
            img = imgio.read_png(p)
            if img.ndim == 2:
                img = np.repeat(img[:, :, None], 3, axis=2)
            img = img[:, :, :3]
        if np.any(img < 0.0):
            raise EnvMapError("loaded environment map has negative radiance")
        return cls(img.astype(np.float64))

    def save(self, path) -> None:
        imgio.write_pfm(path, self.data.astype(np.float32))


def render_envmap_from_sh(light: SHLighting, height: int = 64) -> EnvMap:
    """Synthesize an equirectangular map of b(n)^T L (raw radiance)."""
    dummy = EnvMap(np.zeros((height, 2 * height, 3)))
    dirs = dummy.directions().reshape(-1, 3)
    vals = sh_basis(dirs) @ light.coeffs
    return EnvMap(vals.reshape(height, 2 * height, 3))


def fit_sh_from_envmap(env: EnvMap, convolve_lambertian: bool = False) -> SHLighting:
    """Solid-angle-weighted least-squares SH projection of the radiance.

    With convolve_lambertian, bands are scaled by (pi, 2pi/3, pi/4) so
    L^T b(n) approximates the irradiance on a Lambertian surface with
    normal n.
    """
    dirs = env.directions().reshape(-1, 3)
    w = env.solid_angles().reshape(-1)
    rgb = env.data.reshape(-1, 3)
    b = sh_basis(dirs)
    bw = b * w[:, None]
    gram = b.T @ bw
    rhs = bw.T @ rgb
    coeffs = np.linalg.solve(gram, rhs)
    if convolve_lambertian:
        coeffs = coeffs * LAMBERT_BAND[:, None]
    return SHLighting(coeffs)


def dominant_direction(light: SHLighting) -> np.ndarray:
    """Unit direction of the band-1 (linear) component of the grey lighting;
    +z when the linear part vanishes."""
    lg = light.to_grey()
    d = np.array([lg[3], lg[1], lg[2]])  # (Y11, Y1-1, Y10) -> (x, y, z)
    norm = np.linalg.norm(d)
    if norm < 1e-12:
        return np.array([0.0, 0.0, 1.0])
    return d / norm


def rotate_z(light: SHLighting, angle: float) -> SHLighting:
    """Rotate the lighting about the +z (zenith) axis by `angle` radians.

    Real-SH z-rotation mixes each (m, -m) pair by m*angle; m=0 rows are
    invariant.
    """
    c = light.coeffs.copy()
    out = c.copy()

    def rot_pair(i_neg: int, i_pos: int, m: int) -> None:
        ca, sa = np.cos(m * angle), np.sin(m * angle)
        neg, pos = c[i_neg].copy(), c[i_pos].copy()
        out[i_pos] = ca * pos - sa * neg
        out[i_neg] = sa * pos + ca * neg

    rot_pair(1, 3, 1)  # (Y1-1, Y11)
    rot_pair(4, 8, 2)  # (Y2-2, Y22)
    rot_pair(5, 7, 1)  # (Y2-1, Y21)
    return SHLighting(out)
