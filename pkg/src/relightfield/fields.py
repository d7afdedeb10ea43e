"""The implicit scene model: density+albedo network, shadow network, and the
per-image learnable SH lighting table, plus checkpoint serialization."""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import sh
from .autodiff import Node, ParamStore, Tape, nn, ops
from .encoding import EncoderConfig, encode_node

CKPT_MAGIC = b"NOSRCKPT"
CKPT_VERSION = 1


@dataclass(frozen=True)
class SceneModelConfig:
    """Network sizes. Defaults follow the reference architecture; desk-scale
    presets shrink them (see trainer presets)."""

    trunk_hidden: tuple = (128,) * 8
    trunk_skip_at: int | None = 4
    shadow_hidden: tuple = (64,) * 4
    encoder: EncoderConfig = field(default_factory=EncoderConfig)


@dataclass
class FieldSample:
    """Batched field outputs at query points."""

    sigma: np.ndarray  # (N,)
    albedo: np.ndarray  # (N, 3)
    sigma_grad: np.ndarray  # (N, 3) spatial gradient of sigma
    shadow: np.ndarray | None = None  # (N,)


class SceneModel:
    """Learnable field plus the per-image SH lighting table."""

    def __init__(self, store: ParamStore, cfg: SceneModelConfig, image_ids: list[str]):
        if len(set(image_ids)) != len(image_ids):
            raise ValueError("image ids must be unique")
        self.store = store
        self.cfg = cfg
        self.image_ids = list(image_ids)
        self._id_to_row = {img: i for i, img in enumerate(self.image_ids)}

    # ---- construction -------------------------------------------------------
    @classmethod
    def create(cls, cfg: SceneModelConfig, image_ids: list[str],
               rng: np.random.Generator, dtype=np.float32) -> "SceneModel":
        store = ParamStore(dtype=dtype)
        enc_dim = cfg.encoder.out_dim
        nn.init_mlp(store, "density", enc_dim, list(cfg.trunk_hidden), rng,
                    skip_at=cfg.trunk_skip_at)
        feat = cfg.trunk_hidden[-1]
        nn.init_linear(store, "density.sigma", feat, 1, rng)
        nn.init_linear(store, "density.albedo", feat, 3, rng)
        nn.init_mlp(store, "shadow", enc_dim + sh.N_COEFFS, list(cfg.shadow_hidden), rng)
        nn.init_linear(store, "shadow.out", cfg.shadow_hidden[-1], 1, rng)
        # DC-only grey init: flat white albedo renders ~0.5; higher orders
        # get small noise (std 1e-2) so the first epoch is well posed.
        table = np.zeros((len(image_ids), sh.N_COEFFS, 3))
        table[:, 0, :] = 0.5 / sh.Y00
        table[:, 1:, :] = rng.normal(0.0, 1e-2, size=(len(image_ids), sh.N_COEFFS - 1, 3))
        store.create("sh_table", table.reshape(len(image_ids), 27))
        return cls(store, cfg, image_ids)

    # ---- lighting table -----------------------------------------------------
    def image_index(self, image_id: str) -> int:
        try:
            return self._id_to_row[image_id]
        except KeyError:
            raise KeyError(f"unknown image id {image_id!r}") from None

    def lighting_for_image(self, image_id: str, live: bool = False):
        """Frozen SHLighting copy by default; live=True returns the learnable
        row itself (training-side view, mutations visible)."""
        row = self.store.get("sh_table")[self.image_index(image_id)]
        if live:
            return row
        return sh.SHLighting(row.reshape(sh.N_COEFFS, 3).astype(np.float64))

    # ---- tape-level field queries -------------------------------------------
    def encode(self, tape: Tape, x: Node, iteration: int) -> Node:
        return encode_node(x, iteration, self.cfg.encoder)

    def density_nodes(self, tape: Tape, enc: Node) -> tuple[Node, Node]:
        """(sigma (M,1), albedo (M,3)) from an encoded-point node."""
        feat = nn.mlp_trunk(tape, enc, "density", list(self.cfg.trunk_hidden),
                            skip_at=self.cfg.trunk_skip_at)
        sigma = ops.softplus(nn.linear(tape, feat, "density.sigma"))
        albedo = ops.sigmoid(nn.linear(tape, feat, "density.albedo"))
        return sigma, albedo

    def shadow_node(self, tape: Tape, enc: Node, lg: Node) -> Node:
        """Shadow scalar (M,1) in (0,1) from encoding plus grey lighting (M,9)."""
        if lg.value is not None and lg.value.shape[1] != sh.N_COEFFS:
            from .autodiff import ArityError

            raise ArityError(f"grey SH input must have 9 columns, got {lg.value.shape}")
        h = ops.concat([enc, lg], axis=1)
        feat = nn.mlp_trunk(tape, h, "shadow", list(self.cfg.shadow_hidden))
        return ops.sigmoid(nn.linear(tape, feat, "shadow.out"))

    # ---- numpy-facing queries -----------------------------------------------
    def query_field(self, x: np.ndarray, iteration: int = 10**9,
                    dtype=np.float64) -> FieldSample:
        """Density, albedo and the (differentiable-path) density gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=dtype))
        tape = Tape(self.store, dtype=dtype)
        xn = tape.input("x", x)
        enc = self.encode(tape, xn, iteration)
        sigma, albedo = self.density_nodes(tape, enc)
        grad = tape.input_gradient(sigma, xn)
        return FieldSample(
            sigma=sigma.value[:, 0].copy(),
            albedo=albedo.value.copy(),
            sigma_grad=grad.value.copy(),
        )

    def query_shadow(self, x: np.ndarray, l_grey: np.ndarray, iteration: int = 10**9,
                     dtype=np.float64) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=dtype))
        l_grey = np.asarray(l_grey, dtype=dtype)
        if l_grey.ndim == 1:
            l_grey = np.broadcast_to(l_grey, (x.shape[0], l_grey.shape[0]))
        tape = Tape(self.store, dtype=dtype)
        xn = tape.input("x", x)
        enc = self.encode(tape, xn, iteration)
        s = self.shadow_node(tape, enc, tape.constant(l_grey))
        return s.value[:, 0].copy()


# ---- checkpoint format ---------------------------------------------------------

def _write_block(f, name: str, arr: np.ndarray) -> None:
    nb = name.encode("utf-8")
    f.write(struct.pack("<H", len(nb)))
    f.write(nb)
    a = np.ascontiguousarray(arr, dtype="<f4")
    f.write(struct.pack("<B", a.ndim))
    f.write(struct.pack(f"<{a.ndim}I", *a.shape))
    f.write(a.tobytes())


def _read_block(f) -> tuple[str, np.ndarray]:
    (nlen,) = struct.unpack("<H", f.read(2))
    name = f.read(nlen).decode("utf-8")
    (rank,) = struct.unpack("<B", f.read(1))
    dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
    count = int(np.prod(dims)) if rank else 1
    arr = np.frombuffer(f.read(count * 4), dtype="<f4").reshape(dims)
    return name, arr.copy()


def save_checkpoint(model: SceneModel, path, iteration: int = 0) -> None:
    """Little-endian NOSRCKPT: magic, version, block count, named f32 blocks,
    then the sh_table section (count, per image: id, 27 floats)."""
    cfg = model.cfg
    meta = np.array(
        [cfg.encoder.n_freq_max, cfg.encoder.n_freq_min, cfg.encoder.n_anneal_iters,
         -1 if cfg.trunk_skip_at is None else cfg.trunk_skip_at,
         len(cfg.trunk_hidden), len(cfg.shadow_hidden), iteration],
        dtype=np.float32,
    )
    names = [n for n in model.store.names() if n != "sh_table"]
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", CKPT_VERSION))
        f.write(struct.pack("<I", len(names) + 1))
        _write_block(f, "_meta", meta)
        for name in names:
            _write_block(f, name, model.store.get(name))
        table = np.ascontiguousarray(model.store.get("sh_table"), dtype="<f4")
        f.write(struct.pack("<I", len(model.image_ids)))
        for i, img in enumerate(model.image_ids):
            ib = img.encode("utf-8")
            f.write(struct.pack("<H", len(ib)))
            f.write(ib)
            f.write(table[i].tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path, dtype=np.float32) -> tuple[SceneModel, int]:
    """Load NOSRCKPT; returns (model, trained_iteration)."""
    with open(path, "rb") as f:
        if f.read(8) != CKPT_MAGIC:
            raise CheckpointError(f"bad magic in {path}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (nblocks,) = struct.unpack("<I", f.read(4))
        blocks = dict(_read_block(f) for _ in range(nblocks))
        (nimg,) = struct.unpack("<I", f.read(4))
        image_ids, rows = [], []
        for _ in range(nimg):
            (nlen,) = struct.unpack("<H", f.read(2))
            image_ids.append(f.read(nlen).decode("utf-8"))
            rows.append(np.frombuffer(f.read(27 * 4), dtype="<f4").copy())
    meta = blocks.pop("_meta", None)
    if meta is None:
        raise CheckpointError("checkpoint missing _meta block")
    n_trunk, n_shadow = int(meta[4]), int(meta[5])
    cfg = SceneModelConfig(
        trunk_hidden=tuple(int(blocks[f"density.l{i}.b"].shape[0]) for i in range(n_trunk)),
        trunk_skip_at=None if int(meta[3]) < 0 else int(meta[3]),
        shadow_hidden=tuple(int(blocks[f"shadow.l{i}.b"].shape[0]) for i in range(n_shadow)),
        encoder=EncoderConfig(int(meta[0]), int(meta[1]), int(meta[2])),
    )
    store = ParamStore(dtype=dtype)
    for name, arr in blocks.items():
        store.create(name, arr)
    store.create("sh_table", np.stack(rows) if rows else np.zeros((0, 27), dtype="<f4"))
    return SceneModel(store, cfg, image_ids), int(meta[6])
