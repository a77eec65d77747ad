import numpy as np
import pytest

from tsalign.decompose import (
    ComponentTriple,
    DecompConfig,
    additive_decompose,
    decompose_batch,
    estimate_seasonal,
    loess_smooth,
    moving_average_trend,
    stl_decompose,
)


def brute_moving_average(x, k):
    """Independent oracle: explicit loop over the replicate-padded series."""
    x = list(x)
    padded = [x[0]] * k + x + [x[-1]] * k
    out = []
    for t in range(len(x)):
        window = padded[t : t + 2 * k + 1]
        out.append(sum(window) / len(window))
    return np.array(out)


def brute_seasonal(detrended, period):
    """Independent oracle: python-loop phase means, re-centered, tiled."""
    phases = [[] for _ in range(period)]
    for i, v in enumerate(detrended):
        phases[i % period].append(v)
    means = [sum(p) / len(p) for p in phases]
    center = sum(means) / period
    means = [m - center for m in means]
    return np.array([means[i % period] for i in range(len(detrended))])


class TestMovingAverage:
    def test_k0_identity(self):
        x = np.array([1.0, 2, 3, 4, 5])
        assert np.array_equal(moving_average_trend(x, 0), x)

    def test_k1_hand_computed(self):
        got = moving_average_trend([1, 2, 3, 4, 5], 1)
        assert np.allclose(got, [4 / 3, 2, 3, 4, 14 / 3])

    def test_constant_invariance(self):
        for k in (0, 1, 3, 10, 50):
            assert np.allclose(moving_average_trend(np.full(7, 3.25), k), 3.25)

    def test_k_exceeding_length(self):
        # window clamps to the padded data, no error
        got = moving_average_trend([1.0, 2.0, 3.0], 10)
        assert got.shape == (3,)
        assert np.all(np.isfinite(got))

    @pytest.mark.parametrize("k", [1, 2, 5])
    def test_matches_brute_force(self, k):
        rng = np.random.default_rng(42)
        x = rng.normal(size=30)
        assert np.allclose(moving_average_trend(x, k), brute_moving_average(x, k))

    def test_affine_fixed_on_interior(self):
        t = np.arange(40, dtype=float)
        x = 0.7 * t - 3.0
        k = 4
        got = moving_average_trend(x, k)
        assert np.allclose(got[k:-k], x[k:-k])


class TestSeasonal:
    def test_alternating_already_centered(self):
        got = estimate_seasonal([1.0, -1.0, 1.0, -1.0], 2)
        assert np.allclose(got, [1, -1, 1, -1])

    def test_zeros(self):
        for period in (1, 2, 3):
            assert np.allclose(estimate_seasonal(np.zeros(6), period), 0.0)

    def test_recentering(self):
        got = estimate_seasonal([2.0, 0.0, 2.0, 0.0], 2)
        assert np.allclose(got, [1, -1, 1, -1])

    def test_period_exceeds_window(self):
        with pytest.raises(ValueError, match="period exceeds window"):
            estimate_seasonal(np.zeros(4), 5)

    def test_partial_last_cycle_matches_brute_force(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=17)
        for period in (2, 3, 5, 7):
            assert np.allclose(estimate_seasonal(x, period), brute_seasonal(x, period))

    def test_zero_sum_over_full_period(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=48)
        s = estimate_seasonal(x, 6)
        for start in range(0, 48, 6):
            assert abs(s[start : start + 6].sum()) < 1e-9 * 48


class TestAdditiveDecompose:
    def test_degenerate_identity(self):
        triple = additive_decompose([1.0, 2.0, 3.0], DecompConfig(k=0, period=1))
        assert np.allclose(triple.trend, [1, 2, 3])
        assert np.allclose(triple.seasonal, 0)
        assert np.allclose(triple.residual, 0)

    def test_line_plus_alternating_brute_force(self):
        x = np.array([1.0, 3, 3, 5, 5, 7])
        cfg = DecompConfig(k=1, period=2)
        triple = additive_decompose(x, cfg)
        trend = brute_moving_average(x, 1)
        seasonal = brute_seasonal(x - trend, 2)
        assert np.allclose(triple.trend, trend)
        assert np.allclose(triple.seasonal, seasonal)
        assert np.allclose(triple.reconstruct(), x)

    def test_constant_series(self):
        triple = additive_decompose(np.full(4, 5.0), DecompConfig(k=1, period=2))
        assert np.allclose(triple.trend, 5)
        assert np.allclose(triple.seasonal, 0)
        assert np.allclose(triple.residual, 0)

    def test_shift_equivariance_moving_average(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=64)
        cfg = DecompConfig(k=3, period=8)
        base = additive_decompose(x, cfg)
        shifted = additive_decompose(x + 10.0, cfg)
        assert np.allclose(shifted.trend, base.trend + 10.0)
        assert np.allclose(shifted.seasonal, base.seasonal)
        assert np.allclose(shifted.residual, base.residual)

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="method"):
            additive_decompose(np.zeros(8), DecompConfig(method="multiplicative"))
        with pytest.raises(ValueError, match="period"):
            additive_decompose(np.zeros(8), DecompConfig(period=0))


class TestStl:
    def test_pure_sine_small_residual(self):
        period = 12
        t = np.arange(96)
        amplitude = 2.0
        x = amplitude * np.sin(2 * np.pi * t / period)
        cfg = DecompConfig(period=period, method="stl", loess_bandwidth=0.3)
        triple = stl_decompose(x, cfg)
        assert np.max(np.abs(triple.residual)) < 0.05 * amplitude
        assert np.allclose(triple.reconstruct(), x, atol=1e-12)

    def test_constant_series(self):
        cfg = DecompConfig(period=4, method="stl")
        triple = stl_decompose(np.full(24, 7.5), cfg)
        assert np.allclose(triple.trend, 7.5, atol=1e-6)
        assert np.allclose(triple.seasonal, 0, atol=1e-6)
        assert np.allclose(triple.residual, 0, atol=1e-6)

    def test_too_short_window(self):
        with pytest.raises(ValueError, match="too short"):
            stl_decompose(np.zeros(7), DecompConfig(period=4, method="stl"))

    def test_additivity_random(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            L = int(rng.integers(16, 120))
            period = int(rng.integers(2, max(3, L // 4)))
            x = rng.normal(size=L) * rng.uniform(0.1, 10)
            cfg = DecompConfig(period=period, method="stl")
            triple = additive_decompose(x, cfg)
            scale = max(1.0, np.max(np.abs(x)))
            assert np.max(np.abs(triple.reconstruct() - x)) < 1e-9 * scale


class TestBatch:
    def test_batch_matches_single(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(5, 48))
        cfg = DecompConfig(k=2, period=6)
        trend, seasonal, residual = decompose_batch(X, cfg)
        for i in range(5):
            one = additive_decompose(X[i], cfg)
            assert np.allclose(trend[i], one.trend)
            assert np.allclose(seasonal[i], one.seasonal)
            assert np.allclose(residual[i], one.residual)

    def test_batch_stl_matches_single(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(3, 40))
        cfg = DecompConfig(period=5, method="stl")
        trend, seasonal, residual = decompose_batch(X, cfg)
        for i in range(3):
            one = additive_decompose(X[i], cfg)
            assert np.allclose(trend[i], one.trend)
            assert np.allclose(seasonal[i], one.seasonal)


def test_loess_smooth_recovers_line():
    t = np.arange(50, dtype=float)
    y = 2.0 * t + 1.0
    assert np.allclose(loess_smooth(y, 0.3), y, atol=1e-8)


def test_loess_smooth_tiny_inputs():
    assert np.allclose(loess_smooth(np.array([1.0, 2.0]), 0.5), [1.0, 2.0])
    out = loess_smooth(np.array([1.0, 5.0, 2.0]), 0.5)
    assert out.shape == (3,) and np.all(np.isfinite(out))
