import numpy as np
import pytest
from conftest import assert_close_rel, central_diff
from hypothesis import given, settings
from hypothesis import strategies as st

from relightfield.autodiff import Tape
from relightfield.encoding import (
    EncoderConfig,
    OutOfBoundsError,
    anneal_weights,
    encode_node,
    positional_encode,
)

PAPER_CFG = EncoderConfig(n_freq_max=12, n_freq_min=8, n_anneal_iters=30_000)


class TestAnnealSchedule:
    def test_start_of_training(self):
        b = anneal_weights(PAPER_CFG, 0)
        assert np.allclose(b[:8], 1.0)
        assert b[8] == 0.0
        assert np.all(b[9:] == 0.0)

    def test_fully_annealed(self):
        for it in (30_000, 50_000, 10**9):
            assert np.allclose(anneal_weights(PAPER_CFG, it), 1.0)

    def test_mid_schedule_alpha_two(self):
        # iter=15000 -> alpha=2: band 10 clamps to 0, band 9 clamps to 1
        b = anneal_weights(PAPER_CFG, 15_000)
        assert b[10] == 0.5 * (1.0 - np.cos(0.0)) == 0.0
        assert b[9] == 1.0

    @given(st.integers(0, 60_000), st.integers(0, 60_000))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_iteration(self, i1, i2):
        lo, hi = sorted((i1, i2))
        assert np.all(anneal_weights(PAPER_CFG, hi) >= anneal_weights(PAPER_CFG, lo) - 1e-15)

    @given(st.integers(0, 60_000))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_band(self, it):
        b = anneal_weights(PAPER_CFG, it)
        assert np.all(np.diff(b) <= 1e-15)

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            EncoderConfig(n_freq_max=4, n_freq_min=6)
        with pytest.raises(ValueError):
            EncoderConfig(n_anneal_iters=0)


class TestEncode:
    def test_output_dim(self, rng):
        x = rng.uniform(-0.5, 0.5, size=(5, 3))
        out = positional_encode(x, 0, PAPER_CFG)
        assert out.shape == (5, 3 + 2 * 3 * 12)

    def test_raw_xyz_passthrough_never_attenuated(self, rng):
        x = rng.uniform(-0.5, 0.5, size=(4, 3))
        for it in (0, 123, 10**6):
            assert np.array_equal(positional_encode(x, it, PAPER_CFG)[:, :3], x)

    def test_band_scaling(self, rng):
        x = rng.uniform(-0.5, 0.5, size=(3, 3))
        out = positional_encode(x, 0, PAPER_CFG)
        # band 8 onward is annealed off at iteration 0
        assert np.all(out[:, 3 + 6 * 8:] == 0.0)
        b0 = out[:, 3:9]
        assert np.allclose(b0, np.concatenate([np.sin(x), np.cos(x)], axis=1), atol=1e-12)

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBoundsError):
            positional_encode(np.array([[0.9, 0.9, 0.9]]), 0, PAPER_CFG)

    def test_node_matches_numpy(self, rng):
        x = rng.uniform(-0.5, 0.5, size=(6, 3))
        t = Tape()
        node = encode_node(t.input("x", x), 12_345, PAPER_CFG)
        assert np.allclose(node.value, positional_encode(x, 12_345, PAPER_CFG), atol=1e-12)

    def test_gradient_vs_fd(self, rng):
        x = rng.uniform(-0.5, 0.5, size=(2, 3))
        t = Tape()
        xn = t.input("x", x)
        out = encode_node(xn, 15_000, PAPER_CFG)
        proj = rng.normal(size=out.value.shape)
        from relightfield.autodiff import ops

        loss = ops.sum_(ops.mul(out, t.constant(proj)))
        grads = t.backward(loss)
        fd = central_diff(lambda v: (t.eval({"x": v}), float(loss.value))[1],
                          x.copy(), h=1e-7)
        assert_close_rel(grads[xn], fd, rtol=1e-5, floor=np.abs(fd).max())
