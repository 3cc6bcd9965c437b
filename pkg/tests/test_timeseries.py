import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from regime_lr.errors import InputError, NonstationaryError
from regime_lr.timeseries import (
    ArParams,
    ar_moments,
    check_stationarity,
    gamma_inverse_toeplitz,
    lag_matrix,
    simulate_ar,
    yule_walker_gamma,
)

from conftest import random_stationary


def yw_gamma_oracle(coeffs, sigma2):
    """Solve the Yule-Walker equations for gamma_0..gamma_{p-1} directly."""
    c = np.asarray(coeffs)
    p = c.size
    # unknowns gamma_0..gamma_p; gamma_k = sum_i c_i gamma_|k-i| (+ sigma2 at k=0)
    a = np.zeros((p + 1, p + 1))
    b = np.zeros(p + 1)
    for k in range(p + 1):
        a[k, k] += 1.0
        for i in range(1, p + 1):
            a[k, abs(k - i)] -= c[i - 1]
    b[0] = sigma2
    g = np.linalg.solve(a, b)
    return np.array([[g[abs(i - j)] for j in range(p)] for i in range(p)])


class TestStationarity:
    def test_examples(self):
        assert check_stationarity([0.5])
        assert not check_stationarity([1.0])
        assert not check_stationarity([0.5, 0.6])

    def test_matches_polynomial_roots(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            p = int(rng.integers(1, 5))
            c = rng.uniform(-1.5, 1.5, p)
            roots = np.roots(np.concatenate([-c[::-1], [1.0]]))
            want = bool(np.all(np.abs(roots) > 1.0 + 1e-8))
            assert check_stationarity(c) == want

    @given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.integers(1, 3))
    def test_trailing_zeros_do_not_matter(self, coeffs, extra):
        assert check_stationarity(coeffs) == check_stationarity(coeffs + [0.0] * extra)


class TestMoments:
    def test_white_noise(self):
        mom = ar_moments(ArParams(0.0, [0.0], 1.0))
        assert mom.mean == 0.0
        np.testing.assert_allclose(mom.gamma, [[1.0]])

    def test_ar1(self):
        mom = ar_moments(ArParams(1.0, [0.5], 1.0))
        assert mom.mean == pytest.approx(2.0)
        np.testing.assert_allclose(mom.gamma, [[4.0 / 3.0]], rtol=1e-12)

    def test_ar2_against_yule_walker(self):
        params = ArParams(0.0, [0.5, 0.2], 1.0)
        np.testing.assert_allclose(ar_moments(params).gamma, yw_gamma_oracle([0.5, 0.2], 1.0), rtol=1e-10)

    def test_random_against_yule_walker(self):
        rng = np.random.default_rng(1)
        for p in (1, 2, 3, 4):
            c = random_stationary(rng, p)
            s2 = rng.uniform(0.2, 3.0)
            np.testing.assert_allclose(yule_walker_gamma(ArParams(0.0, c, s2)), yw_gamma_oracle(c, s2), rtol=1e-8, atol=1e-10)

    def test_log_det(self):
        params = ArParams(0.3, [0.4, -0.3, 0.1], 2.0)
        mom = ar_moments(params, check=True)
        assert mom.log_det_gamma == pytest.approx(np.linalg.slogdet(mom.gamma)[1], rel=1e-12)

    def test_nonstationary_raises(self):
        with pytest.raises(NonstationaryError, match="nonstationary"):
            ar_moments(ArParams(0.0, [1.0], 1.0))


class TestToeplitzInverse:
    def test_scalar(self):
        np.testing.assert_allclose(gamma_inverse_toeplitz(ArParams(0.0, [0.6], 2.0)), [[(1 - 0.36) / 2.0]])
        np.testing.assert_allclose(gamma_inverse_toeplitz(ArParams(0.0, [0.0], 1.0)), [[1.0]])

    def test_ar2_dense_oracle(self):
        params = ArParams(0.0, [0.5, 0.2], 1.0)
        dense = np.linalg.inv(yw_gamma_oracle([0.5, 0.2], 1.0))
        np.testing.assert_allclose(gamma_inverse_toeplitz(params), dense, atol=1e-8)

    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_identity(self, p, seed):
        rng = np.random.default_rng(seed)
        params = ArParams(rng.normal(), random_stationary(rng, p), rng.uniform(0.1, 5.0))
        mom = ar_moments(params)
        assert np.max(np.abs(mom.gamma_inv @ mom.gamma - np.eye(p))) < 1e-8


class TestLagMatrix:
    def test_layout(self):
        y, lags = lag_matrix([1.0, 2.0, 3.0, 4.0, 5.0], 2)
        np.testing.assert_array_equal(y, [3.0, 4.0, 5.0])
        np.testing.assert_array_equal(lags, [[2.0, 1.0], [3.0, 2.0], [4.0, 3.0]])

    def test_too_short(self):
        with pytest.raises(InputError):
            lag_matrix([1.0, 2.0], 2)


class TestSimulate:
    def test_deterministic_and_length(self):
        params = ArParams(0.2, [0.5, -0.2], 1.5)
        a = simulate_ar(params, 100, seed=9)
        b = simulate_ar(params, 100, seed=9)
        assert a.size == 102
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, simulate_ar(params, 100, seed=10))

    def test_white_noise_mean(self):
        n = 40_000
        y = simulate_ar(ArParams(0.0, [0.0], 1.0), n, seed=1)
        assert abs(y.mean()) < 4 / math.sqrt(n)

    def test_ar1_mean(self):
        y = simulate_ar(ArParams(1.0, [0.5], 1.0), 100_000, seed=2)
        assert abs(y.mean() - 2.0) < 0.05

    def test_autocovariances(self):
        params = ArParams(0.0, [0.5, 0.2], 1.0)
        n = 100_000
        y = simulate_ar(params, n, seed=4)
        gamma = ar_moments(params).gamma
        d = y - y.mean()
        for k in range(2):
            emp = float(d[k:] @ d[: d.size - k]) / d.size
            # long-run s.e. of a sample autocovariance is O(gamma_0 / sqrt(n)) times a modest factor
            se = 4.0 * gamma[0, 0] / math.sqrt(n)
            assert abs(emp - gamma[0, k]) < 5 * se

    def test_rejects_nonstationary(self):
        with pytest.raises(NonstationaryError):
            simulate_ar(ArParams(0.0, [1.01], 1.0), 10)


class TestArParams:
    def test_roundtrip_and_immutability(self):
        params = ArParams(0.1, [0.3, 0.2], 0.7)
        vec = params.as_vector()
        np.testing.assert_array_equal(vec, [0.1, 0.3, 0.2, 0.7])
        assert ArParams.from_vector(vec) == params
        with pytest.raises(ValueError):
            params.coeffs[0] = 1.0

    def test_rejects_negative_variance(self):
        with pytest.raises(InputError):
            ArParams(0.0, [0.1], -1.0)
