import numpy as np
import pytest
from conftest import assert_close_rel, central_diff

from relightfield import sh
from relightfield.encoding import EncoderConfig
from relightfield.fields import (
    SceneModel,
    SceneModelConfig,
    load_checkpoint,
    save_checkpoint,
)

SMALL_CFG = SceneModelConfig(
    trunk_hidden=(16, 16),
    trunk_skip_at=1,
    shadow_hidden=(12,),
    encoder=EncoderConfig(n_freq_max=6, n_freq_min=4, n_anneal_iters=1000),
)


@pytest.fixture
def model(rng):
    return SceneModel.create(SMALL_CFG, ["a", "b", "c"], rng, dtype=np.float64)


def zero_heads(model):
    for name in ("density.sigma", "density.albedo", "shadow.out"):
        model.store.set(f"{name}.w", np.zeros_like(model.store.get(f"{name}.w")))
        model.store.set(f"{name}.b", np.zeros_like(model.store.get(f"{name}.b")))


class TestQueryField:
    def test_zero_head_gives_activation_of_zero(self, model, rng):
        zero_heads(model)
        x = rng.uniform(-0.5, 0.5, size=(5, 3))
        out = model.query_field(x, iteration=0)
        assert np.allclose(out.sigma, np.log(2.0), atol=1e-12)
        assert np.allclose(out.albedo, 0.5, atol=1e-12)
        assert np.allclose(out.sigma_grad, 0.0, atol=1e-12)

    @pytest.mark.parametrize("iteration,h", [(0, 1e-6), (10**9, 1e-7)])
    def test_sigma_grad_vs_fd(self, model, rng, iteration, h):
        x = rng.uniform(-0.45, 0.45, size=(4, 3))
        out = model.query_field(x, iteration=iteration)
        for i in range(x.shape[0]):
            fd = central_diff(
                lambda v, i=i: float(
                    model.query_field(
                        np.vstack([x[:i], v[None, :], x[i + 1:]]), iteration=iteration
                    ).sigma[i]
                ),
                x[i].copy(),
                h=h,
            )
            assert_close_rel(out.sigma_grad[i], fd, rtol=1e-4,
                             floor=max(np.abs(fd).max(), 1e-3))

    def test_determinism(self, model, rng):
        x = rng.uniform(-0.5, 0.5, size=(7, 3))
        a = model.query_field(x, iteration=100)
        b = model.query_field(x, iteration=100)
        assert np.array_equal(a.sigma, b.sigma)
        assert np.array_equal(a.albedo, b.albedo)
        assert np.array_equal(a.sigma_grad, b.sigma_grad)

    def test_activation_bounds_fuzz(self, model, rng):
        # activation-enforced ranges over 1e4 random points
        v = rng.normal(size=(10_000, 3))
        v = v / np.linalg.norm(v, axis=1, keepdims=True) * rng.uniform(0, 1, (10_000, 1)) ** (1 / 3)
        out = model.query_field(v, iteration=500)
        s = model.query_shadow(v, rng.normal(size=9), iteration=500)
        assert np.all(out.sigma >= 0.0)
        assert np.all((out.albedo >= 0.0) & (out.albedo <= 1.0))
        assert np.all((s >= 0.0) & (s <= 1.0))

    def test_out_of_bounds_propagates(self, model):
        from relightfield.encoding import OutOfBoundsError

        with pytest.raises(OutOfBoundsError):
            model.query_field(np.array([[1.2, 0.0, 0.0]]))


class TestQueryShadow:
    def test_zero_head_is_half(self, model, rng):
        zero_heads(model)
        s = model.query_shadow(rng.uniform(-0.5, 0.5, size=(4, 3)), np.zeros(9))
        assert np.allclose(s, 0.5, atol=1e-12)

    def test_lighting_continuity(self, model, rng):
        x = rng.uniform(-0.5, 0.5, size=(6, 3))
        lg = rng.normal(size=9)
        dl = rng.normal(size=9)
        dl = dl / np.linalg.norm(dl) * 1e-4
        s1 = model.query_shadow(x, lg)
        s2 = model.query_shadow(x, lg + dl)
        assert np.abs(s1 - s2).max() <= 1e-3

    def test_wrong_arity(self, model, rng):
        from relightfield.autodiff import ArityError

        with pytest.raises(ArityError):
            model.query_shadow(rng.uniform(-0.5, 0.5, size=(2, 3)), np.zeros(8))

    def test_deterministic(self, model, rng):
        x = rng.uniform(-0.5, 0.5, size=(3, 3))
        lg = rng.normal(size=9)
        assert np.array_equal(model.query_shadow(x, lg), model.query_shadow(x, lg))


class TestLightingTable:
    def test_init_dc_grey(self, model):
        light = model.lighting_for_image("b")
        assert np.allclose(light.coeffs[0], 0.5 / sh.Y00, atol=1e-6)
        assert np.abs(light.coeffs[1:]).max() < 0.05
        # flat white albedo under this light renders ~0.5 grey
        shade = sh.shade(np.ones(3), np.array([0.0, 0.0, 1.0]), light)
        assert np.allclose(shade, 0.5, atol=0.05)

    def test_unknown_id(self, model):
        with pytest.raises(KeyError):
            model.lighting_for_image("nope")

    def test_live_entry_is_view(self, model):
        row = model.lighting_for_image("a", live=True)
        row[0] += 1.0
        assert model.lighting_for_image("a").coeffs[0, 0] == pytest.approx(
            0.5 / sh.Y00 + 1.0, abs=1e-5)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, model, tmp_path):
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(model, p1, iteration=777)
        loaded, it = load_checkpoint(p1, dtype=np.float64)
        assert it == 777
        assert loaded.image_ids == model.image_ids
        assert loaded.cfg == model.cfg
        save_checkpoint(loaded, p2, iteration=777)
        assert p1.read_bytes() == p2.read_bytes()

    def test_params_preserved_to_f32(self, model, tmp_path):
        p = tmp_path / "m.ckpt"
        save_checkpoint(model, p)
        loaded, _ = load_checkpoint(p)
        for name in model.store.names():
            assert np.array_equal(
                loaded.store.get(name),
                model.store.get(name).astype(np.float32),
            )

    def test_bad_magic(self, tmp_path):
        from relightfield.fields import CheckpointError

        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(CheckpointError):
            load_checkpoint(p)

    def test_queries_match_after_round_trip(self, model, rng, tmp_path):
        p = tmp_path / "m.ckpt"
        f32 = SceneModel(model.store.astype(np.float32), model.cfg, model.image_ids)
        save_checkpoint(f32, p)
        loaded, _ = load_checkpoint(p)
        x = rng.uniform(-0.5, 0.5, size=(5, 3)).astype(np.float32)
        a = f32.query_field(x, 100, dtype=np.float32)
        b = loaded.query_field(x, 100, dtype=np.float32)
        assert np.array_equal(a.sigma, b.sigma)
