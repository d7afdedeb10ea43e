import numpy as np
import pytest
from conftest import assert_close_rel

from relightfield import sh
from relightfield.autodiff import Tape


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


class TestBasis:
    def test_north_pole_values(self):
        b = sh.sh_basis(np.array([0.0, 0.0, 1.0]))
        expected = np.array([0.282095, 0.0, 0.488603, 0.0, 0.0, 0.0, 0.630783, 0.0, 0.0])
        assert np.allclose(b, expected, atol=1e-6)

    def test_south_pole_parity(self):
        bn = sh.sh_basis(np.array([0.0, 0.0, 1.0]))
        bs = sh.sh_basis(np.array([0.0, 0.0, -1.0]))
        assert np.isclose(bs[2], -bn[2])
        assert np.isclose(bs[6], bn[6])

    def test_dc_constant_everywhere(self, rng):
        b = sh.sh_basis(random_unit(rng, 200))
        assert np.allclose(b[:, 0], 0.282095, atol=1e-6)

    def test_non_unit_rejected(self):
        with pytest.raises(sh.NormalizationError):
            sh.sh_basis(np.array([0.0, 0.0, 1.5]))

    def test_monte_carlo_orthonormality(self):
        # stratified uniform directions (jittered equal-area grid): each
        # sample is marginally uniform; stratification tames estimator noise
        # enough for the 2e-3 bound at 1e6 samples.
        rng = np.random.default_rng(0)
        nz, nphi = 1000, 1000
        z = (np.repeat(np.arange(nz), nphi) + rng.uniform(size=nz * nphi)) * (2.0 / nz) - 1.0
        phi = (np.tile(np.arange(nphi), nz) + rng.uniform(size=nz * nphi)) * (2.0 * np.pi / nphi)
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        b = sh.sh_basis(d)
        gram = (b.T @ b) * (4.0 * np.pi / d.shape[0])
        assert np.abs(gram - np.eye(9)).max() <= 2e-3

    def test_tape_basis_matches_numpy(self, rng):
        n = random_unit(rng, 64)
        t = Tape()
        node = t.input("n", n)
        b = sh.sh_basis_node(node)
        assert np.allclose(b.value, sh.sh_basis(n), atol=1e-12)


class TestShade:
    def test_dc_only_white(self):
        light = sh.SHLighting.grey_ambient(0.5)
        v = light.coeffs[0, 0]
        out = sh.shade(np.ones(3), np.array([0.0, 0.0, 1.0]), light)
        assert np.allclose(out, 0.282095 * v, atol=1e-5)
        assert np.allclose(out, 0.5, atol=1e-6)

    def test_zero_albedo(self, rng):
        light = sh.SHLighting(rng.normal(size=(9, 3)))
        out = sh.shade(np.zeros(3), np.array([0.0, 0.0, 1.0]), light)
        assert np.all(out == 0.0)

    def test_single_band_product(self):
        coeffs = np.zeros((9, 3))
        coeffs[2, :] = 1.0  # Y10 row
        out = sh.shade(np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]),
                       sh.SHLighting(coeffs))
        assert np.allclose(out, [0.488603, 0.0, 0.0], atol=1e-6)

    def test_linear_in_light(self, rng):
        light = sh.SHLighting(rng.normal(size=(9, 3)))
        n = random_unit(rng, 1)[0]
        a = rng.uniform(size=3)
        assert np.allclose(sh.shade(a, n, light.scaled(2.0)), 2.0 * sh.shade(a, n, light),
                           rtol=1e-12)


class TestGrey:
    def test_identical_channels_idempotent(self, rng):
        col = rng.normal(size=9)
        light = sh.SHLighting(np.stack([col] * 3, axis=1))
        assert np.allclose(light.to_grey(), col)

    def test_mean_row(self):
        coeffs = np.zeros((9, 3))
        coeffs[4] = [0.3, 0.6, 0.9]
        assert np.isclose(sh.to_grey(sh.SHLighting(coeffs))[4], 0.6)

    def test_zeros(self):
        assert np.all(sh.to_grey(sh.SHLighting(np.zeros((9, 3)))) == 0.0)

    def test_channel_permutation_invariant(self, rng):
        c = rng.normal(size=(9, 3))
        g1 = sh.SHLighting(c).to_grey()
        g2 = sh.SHLighting(c[:, [2, 0, 1]]).to_grey()
        assert np.allclose(g1, g2)


class TestJitter:
    def test_empirical_std(self):
        rng = np.random.default_rng(0)
        draws = np.stack([sh.jitter_grey(np.zeros(9), rng) for _ in range(100_000 // 9 + 1)])
        std = draws.std()
        assert abs(std - 0.025) / 0.025 < 0.05

    def test_disabled_identity(self, rng):
        lg = rng.normal(size=9)
        assert np.array_equal(sh.jitter_grey(lg, rng, enabled=False), lg)

    def test_different_seeds_differ(self):
        lg = np.zeros(9)
        a = sh.jitter_grey(lg, np.random.default_rng(1))
        b = sh.jitter_grey(lg, np.random.default_rng(2))
        assert not np.array_equal(a, b)


class TestEnvMapFit:
    def test_constant_white_dc_only(self):
        env = sh.EnvMap(np.ones((32, 64, 3)))
        light = sh.fit_sh_from_envmap(env)
        assert np.allclose(light.coeffs[0], 1.0 / sh.Y00, atol=2e-3)
        assert np.abs(light.coeffs[1:]).max() < 1e-6

    def test_round_trip_random_light(self, rng):
        for _ in range(5):
            ref = sh.SHLighting(rng.normal(size=(9, 3)))
            env = sh.render_envmap_from_sh(ref, height=64)
            rec = sh.fit_sh_from_envmap(env)
            assert_close_rel(rec.coeffs, ref.coeffs, rtol=1e-3,
                             floor=np.abs(ref.coeffs).max())

    def test_all_black(self):
        env = sh.EnvMap(np.zeros((16, 32, 3)))
        light = sh.fit_sh_from_envmap(env)
        assert np.all(light.coeffs == 0.0)

    def test_lambertian_convolution_scales_bands(self, rng):
        ref = sh.SHLighting(rng.normal(size=(9, 3)))
        env = sh.render_envmap_from_sh(ref, height=64)
        raw = sh.fit_sh_from_envmap(env, convolve_lambertian=False)
        conv = sh.fit_sh_from_envmap(env, convolve_lambertian=True)
        assert np.allclose(conv.coeffs, raw.coeffs * sh.LAMBERT_BAND[:, None])

    def test_solid_angles_sum(self):
        env = sh.EnvMap(np.zeros((20, 40, 3)))
        assert np.isclose(env.solid_angles().sum(), 4.0 * np.pi, rtol=1e-3)

    def test_bad_shapes_rejected(self):
        with pytest.raises(sh.EnvMapError):
            sh.EnvMap(np.zeros((32, 32, 3)))
        with pytest.raises(sh.EnvMapError):
            sh.EnvMap(np.full((8, 16, 3), np.nan))


class TestTextFormat:
    def test_round_trip(self, rng, tmp_path):
        light = sh.SHLighting(rng.normal(size=(9, 3)))
        p = tmp_path / "light.txt"
        light.save_text(p)
        again = sh.SHLighting.load_text(p)
        assert np.array_equal(light.coeffs, again.coeffs)

    def test_malformed_rejected(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("1 2 3\n4 5 6\n")
        with pytest.raises(ValueError):
            sh.SHLighting.load_text(p)


class TestRotation:
    @pytest.mark.parametrize("angle", [0.3, 1.2, np.pi / 2, 2.5])
    def test_rotation_property(self, rng, angle):
        """Rotated coefficients shade n like original coefficients shade
        the inversely rotated n."""
        light = sh.SHLighting(rng.normal(size=(9, 3)))
        rot = sh.rotate_z(light, angle)
        ca, sa = np.cos(-angle), np.sin(-angle)
        for n in random_unit(rng, 20):
            n_back = np.array([ca * n[0] - sa * n[1], sa * n[0] + ca * n[1], n[2]])
            lhs = sh.sh_basis(n) @ rot.coeffs
            rhs = sh.sh_basis(n_back) @ light.coeffs
            assert np.allclose(lhs, rhs, atol=1e-10)

    def test_dominant_direction(self):
        coeffs = np.zeros((9, 3))
        coeffs[3, :] = 2.0  # Y11 ~ x
        assert np.allclose(sh.dominant_direction(sh.SHLighting(coeffs)), [1, 0, 0])
