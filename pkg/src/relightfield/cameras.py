"""Pinhole cameras (OpenCV convention: x right, y down, z forward) and ray
generation with optional training-time sub-pixel jitter."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    c2w: np.ndarray  # 4x4 rigid camera-to-world
    width: int
    height: int
    near: float
    far: float

    def __post_init__(self):
        self.c2w = np.asarray(self.c2w, dtype=np.float64)
        if self.c2w.shape != (4, 4):
            raise ValueError(f"c2w must be 4x4, got {self.c2w.shape}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got {self.near}, {self.far}")
        r = self.c2w[:3, :3]
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-5:
            raise ValueError("rotation block is not orthonormal")

    @property
    def origin(self) -> np.ndarray:
        return self.c2w[:3, 3]

    @property
    def forward(self) -> np.ndarray:
        return self.c2w[:3, 2]

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "w": self.width, "h": self.height,
            "c2w": [float(v) for v in self.c2w.reshape(-1)],
        }

    @classmethod
    def from_dict(cls, d: dict, near: float, far: float) -> "Camera":
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            c2w=np.asarray(d["c2w"], dtype=np.float64).reshape(4, 4),
            width=int(d["w"]), height=int(d["h"]), near=near, far=far,
        )


@dataclass
class Ray:
    origin: np.ndarray
    dir: np.ndarray
    pixel: tuple
    jitter: np.ndarray = field(default_factory=lambda: np.zeros(2))


class PixelOutOfBounds(ValueError):
    pass


def generate_rays(cam: Camera, rows: np.ndarray, cols: np.ndarray,
                  jitter_on: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched ray generation; returns (origins (R,3), dirs (R,3), jitters (R,2)).

    Rays pass through (col+0.5+jx, row+0.5+jy) with jx, jy ~ U(-0.5, 0.5) when
    jittered, else through pixel centres. Directions are unit length.
    """
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    if np.any(rows < 0) or np.any(rows >= cam.height) or np.any(cols < 0) or np.any(cols >= cam.width):
        raise PixelOutOfBounds("pixel outside image bounds")
    n = rows.shape[0]
    if jitter_on:
        if rng is None:
            raise ValueError("jitter requires an rng")
        jit = rng.uniform(-0.5, 0.5, size=(n, 2))
    else:
        jit = np.zeros((n, 2))
    u = cols + 0.5 + jit[:, 0]
    v = rows + 0.5 + jit[:, 1]
    d_cam = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones(n)], axis=1)
    d_world = d_cam @ cam.c2w[:3, :3].T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(cam.origin, (n, 3)).copy()
    return origins, d_world, jit


def generate_ray(cam: Camera, row: float, col: float, jitter_on: bool = False,
                 rng: np.random.Generator | None = None) -> Ray:
    o, d, j = generate_rays(cam, np.array([row]), np.array([col]), jitter_on, rng)
    return Ray(origin=o[0], dir=d[0], pixel=(row, col), jitter=j[0])


def look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world with +z toward target, +y down-ish (OpenCV image axes)."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    upv = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, upv)
    nrm = np.linalg.norm(right)
    if nrm < 1e-8:  # forward parallel to up; pick another axis
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        nrm = np.linalg.norm(right)
    right /= nrm
    down = np.cross(fwd, right)
    c2w = np.eye(4)
    c2w[:3, 0] = right
    c2w[:3, 1] = down
    c2w[:3, 2] = fwd
    c2w[:3, 3] = eye
    return c2w


def ray_sphere_interval(origins: np.ndarray, dirs: np.ndarray, near: float, far: float,
                        radius: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Clip [near, far] to the ray's unit-sphere crossing.

    Returns (t_near (R,), t_far (R,), hit (R,) bool). Rays that miss the
    sphere (or whose crossing lies outside [near, far]) get hit=False.
    """
    b = np.einsum("ij,ij->i", origins, dirs)
    c = np.einsum("ij,ij->i", origins, origins) - radius * radius
    disc = b * b - c
    hit = disc > 0.0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = np.maximum(-b - sq, near)
    t1 = np.minimum(-b + sq, far)
    hit &= t1 > t0
    return np.where(hit, t0, near), np.where(hit, t1, far), hit
