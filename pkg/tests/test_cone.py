import numpy as np
import pytest
from hypothesis import given, strategies as st

from regime_lr.cone import ConePoint, ConeSolverOptions, cone_infimum, cone_infimum_batch, sym_from_image, v_map
from regime_lr.errors import InputError, NumericalError


def grid_oracle(z, w, lim=3.0, coarse=0.01, fine=0.0005):
    """Two-stage grid search over omega in [-lim, lim]^2 with omega_1 >= 0 (v is even)."""
    g1 = np.arange(0.0, lim + coarse / 2, coarse)
    g2 = np.arange(-lim, lim + coarse / 2, coarse)
    om = np.stack(np.meshgrid(g1, g2, indexing="ij"), -1).reshape(-1, 2)
    r = v_map(om) - z
    h = np.einsum("nk,kl,nl->n", r, w, r)
    best = om[np.argmin(h)]
    f = np.arange(-2 * coarse, 2 * coarse + fine / 2, fine)
    local = np.stack(np.meshgrid(best[0] + f, best[1] + f, indexing="ij"), -1).reshape(-1, 2)
    r = v_map(local) - z
    return min(h.min(), np.einsum("nk,kl,nl->n", r, w, r).min())


def random_spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + 0.2 * np.eye(n)


class TestExamples:
    def test_inside_cone(self):
        val, pt = cone_infimum([4.0], [[1.0]], 1)
        assert val == pytest.approx(0.0, abs=1e-12)
        assert pt.omega[0] == pytest.approx(2.0)

    def test_negative_scalar(self):
        val, pt = cone_infimum([-3.0], [[2.0]], 1)
        assert val == pytest.approx(18.0)
        assert pt.omega[0] == 0.0

    def test_rank_one_input(self):
        val, pt = cone_infimum([1.0, 1.0, 1.0], np.eye(3), 2)
        assert val == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(pt.omega, [1.0, 1.0], atol=1e-6)

    def test_grid_oracle_example(self):
        z = np.array([1.0, 1.0, -3.0])
        val, _ = cone_infimum(z, np.eye(3), 2)
        want = grid_oracle(z, np.eye(3))
        assert abs(val - want) < 1e-4
        assert val <= want + 1e-12


class TestProperties:
    def test_random_grid_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            z = rng.normal(size=3)
            w = random_spd(rng, 3)
            val, _ = cone_infimum(z, w, 2)
            assert abs(val - grid_oracle(z, w)) < 1e-4

    @given(st.integers(0, 2**32 - 1))
    def test_bounds_and_canonical_sign(self, seed):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=6) * rng.uniform(0.1, 5)
        w = random_spd(rng, 6)
        val, pt = cone_infimum(z, w, 3)
        assert 0.0 <= val <= z @ w @ z + 1e-9
        assert pt.omega[0] >= 0.0
        np.testing.assert_allclose(pt.matrix(), np.outer(pt.omega, pt.omega), atol=1e-12)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 2.0, 10.0]))
    def test_scaling(self, seed, c):
        rng = np.random.default_rng(seed)
        z = rng.normal(size=3)
        w = random_spd(rng, 3)
        base, _ = cone_infimum(z, w, 2)
        scaled, _ = cone_infimum(c * z, w, 2)
        assert scaled == pytest.approx(c * c * base, rel=1e-6, abs=1e-12)

    def test_zero_iff_psd_rank_one(self):
        w = np.eye(3)
        val, _ = cone_infimum(v_map([0.3, -1.2]), w, 2)
        assert val < 1e-12
        val, _ = cone_infimum([1.0, 1.0, 0.0], w, 2)  # identity matrix: rank two
        assert val > 0.1

    def test_batch_matches_single(self):
        rng = np.random.default_rng(5)
        z = rng.normal(size=(30, 3))
        w = random_spd(rng, 3)
        vals, _, _ = cone_infimum_batch(z, w, 2)
        for k in range(30):
            assert vals[k] == pytest.approx(cone_infimum(z[k], w, 2)[0], abs=1e-10)

    def test_cone_point(self):
        pt = ConePoint.from_omega([-1.0, 2.0])
        np.testing.assert_array_equal(pt.omega, [1.0, -2.0])
        np.testing.assert_array_equal(pt.image, [1.0, 4.0, -2.0])
        assert np.all(pt.image[:2] >= 0)
        np.testing.assert_array_equal(sym_from_image(pt.image, 2), [[1.0, -2.0], [-2.0, 4.0]])


class TestErrors:
    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            cone_infimum([1.0, 2.0], np.eye(2), 2)

    def test_non_finite(self):
        with pytest.raises(NumericalError):
            cone_infimum([np.nan, 1.0, 1.0], np.eye(3), 2)

    def test_deterministic(self):
        z = np.array([0.3, -1.0, 2.0])
        w = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.0], [0.1, 0.0, 3.0]])
        opts = ConeSolverOptions(seed=3)
        assert cone_infimum(z, w, 2, opts)[0] == cone_infimum(z, w, 2, opts)[0]
