"""PNG and PFM image I/O.

PNG is 8-bit via Pillow; float images are clamped to [0,1] and quantized with
round-half-up. PFM is the portable float map (little-endian, bottom-to-top
row order) used for lossless image exchange.
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image


def write_png(path, img: np.ndarray) -> None:
    """Float image in [0,1] (HxW or HxWx3) -> 8-bit PNG, round-half-up."""
    arr = np.asarray(img, dtype=np.float64)
    q = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q).save(str(path), format="PNG")


def read_png(path) -> np.ndarray:
    """8-bit PNG -> float array in [0,1] (values linearized by /255)."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im)
    if arr.dtype != np.uint8:
        arr = arr.astype(np.uint8)
    return arr.astype(np.float32) / 255.0


def write_pfm(path, img: np.ndarray) -> None:
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf\n"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF\n"
    else:
        raise ValueError(f"PFM supports HxW or HxWx3, got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(header)
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")  # negative scale => little-endian
        f.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: {path}")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        count = w * h * channels
        data = np.frombuffer(f.read(count * 4), dtype="<f4" if scale < 0 else ">f4")
        if data.size != count:
            raise ValueError(f"truncated PFM file: {path}")
    img = data.reshape(h, w, channels)[::-1]
    if channels == 1:
        img = img[:, :, 0]
    return np.ascontiguousarray(img.astype(np.float32))


def load_image_float(path) -> np.ndarray:
    """Float RGB image from PFM (lossless) or PNG (8-bit, /255)."""
    p = Path(path)
    if p.suffix.lower() == ".pfm":
        img = read_pfm(p)
    else:
        img = read_png(p)
    if img.ndim == 2:
        img = np.repeat(img[:, :, None], 3, axis=2)
    return img[:, :, :3]
