import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from scipy import signal as sps

from semgsnn.errors import CalibrationError, ConfigError, InputError
from semgsnn.signal import (BandpassFilter, CalibrationProfile, FilterConfig, Preprocessor, SignalBuffer,
                            adaptive_normalize, bandpass_filter, butter_bandpass_sos, compute_calibration,
                            rectify, sos_response)

RATE = 2000.0


def _steady_gain(freq_hz, seconds=2.0):
    t = np.arange(int(seconds * RATE)) / RATE
    x = np.sin(2 * np.pi * freq_hz * t)
    y = bandpass_filter(SignalBuffer(x, RATE)).samples[0]
    tail = y[len(y) // 2:]
    return np.max(np.abs(tail))


class TestButterworthDesign:
    def test_matches_reference_design(self):
        # scipy designs the same filter independently; compare responses
        ours = butter_bandpass_sos(20, 500, RATE, 4)
        ref = sps.butter(4, [20, 500], btype="bandpass", fs=RATE, output="sos")
        f = np.linspace(0.5, 999, 2000)
        np.testing.assert_allclose(sos_response(ours, f, RATE), sos_response(ref, f, RATE), atol=1e-10)

    @pytest.mark.parametrize("low,high,order", [(10, 300, 2), (20, 500, 4), (50, 900, 3), (5, 60, 6)])
    def test_other_bands(self, low, high, order):
        ours = butter_bandpass_sos(low, high, RATE, order)
        ref = sps.butter(order, [low, high], btype="bandpass", fs=RATE, output="sos")
        f = np.linspace(0.5, 999, 500)
        np.testing.assert_allclose(np.abs(sos_response(ours, f, RATE)),
                                   np.abs(sos_response(ref, f, RATE)), atol=1e-9)

    def test_sections_shape(self):
        sos = butter_bandpass_sos(20, 500, RATE, 4)
        assert sos.shape == (4, 6)
        # every section stable
        for b0, b1, b2, a0, a1, a2 in sos:
            assert np.all(np.abs(np.roots([a0, a1, a2])) < 1)

    def test_dc_rejected_by_40db(self):
        h = np.abs(sos_response(butter_bandpass_sos(20, 500, RATE, 4), [0.0], RATE))[0]
        assert 20 * np.log10(h + 1e-300) <= -40

    @pytest.mark.parametrize("low,high", [(500, 20), (20, 1000), (20, 1500), (0, 500)])
    def test_invalid_cutoffs(self, low, high):
        with pytest.raises(ConfigError):
            butter_bandpass_sos(low, high, RATE, 4)


class TestBandpassFilter:
    def test_constant_converges_to_zero(self):
        y = bandpass_filter(SignalBuffer(np.full(8000, 5.0), RATE)).samples[0]
        assert abs(y[-1]) < 1e-6
        assert np.max(np.abs(y[-1000:])) < 1e-5

    def test_passband_100hz_within_1db(self):
        gain = _steady_gain(100.0)
        assert abs(20 * np.log10(gain)) < 1.0

    def test_stopband_1hz(self):
        # steady state needs several seconds at 1 Hz
        assert _steady_gain(1.0, seconds=8.0) <= 0.1

    def test_shape_preserved(self):
        x = np.random.default_rng(0).standard_normal((3, 777))
        assert bandpass_filter(SignalBuffer(x, RATE)).samples.shape == (3, 777)

    def test_causal(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 1000))
        x2 = x.copy()
        x2[:, 600:] = rng.standard_normal((2, 400))
        y1 = bandpass_filter(SignalBuffer(x, RATE)).samples
        y2 = bandpass_filter(SignalBuffer(x2, RATE)).samples
        np.testing.assert_array_equal(y1[:, :600], y2[:, :600])

    def test_chunked_equals_whole(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 3001))
        whole = bandpass_filter(SignalBuffer(x, RATE)).samples
        filt = BandpassFilter(FilterConfig(), RATE, 4)
        parts = [filt.process(x[:, a:b]) for a, b in [(0, 1), (1, 500), (500, 501), (501, 3001)]]
        np.testing.assert_allclose(np.concatenate(parts, axis=1), whole, rtol=0, atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x, y = rng.standard_normal((2, 2, 2000))
        a, b = 2.5, -0.75
        f = lambda s: bandpass_filter(SignalBuffer(s, RATE)).samples
        lhs = f(a * x + b * y)
        rhs = a * f(x) + b * f(y)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * np.max(np.abs(rhs)))

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            bandpass_filter(SignalBuffer(np.zeros((2, 0)), RATE))

    def test_wrong_channel_count(self):
        filt = BandpassFilter(FilterConfig(), RATE, 2)
        with pytest.raises(InputError):
            filt.process(np.zeros((3, 10)))


class TestRectify:
    def test_example(self):
        out = rectify(SignalBuffer([-1.0, 0.0, 2.0])).samples[0]
        np.testing.assert_array_equal(out, [1, 0, 2])

    def test_zero(self):
        assert not rectify(SignalBuffer(np.zeros((2, 5)))).samples.any()

    @given(hnp.arrays(float, (2, 20), elements=st.floats(-1e6, 1e6)))
    def test_idempotent(self, x):
        once = rectify(SignalBuffer(x))
        np.testing.assert_array_equal(rectify(once).samples, once.samples)


class TestCalibration:
    def test_outlier_robust(self):
        assert compute_calibration(SignalBuffer([1.0, 2.0, 100.0])).median_per_channel[0] == 2.0

    def test_even_count(self):
        assert compute_calibration(SignalBuffer([1.0, 3.0])).median_per_channel[0] == 2.0

    def test_constant(self):
        assert compute_calibration(SignalBuffer(np.full(7, 0.3))).median_per_channel[0] == 0.3

    def test_per_channel(self):
        prof = compute_calibration(SignalBuffer([[1.0, 2.0, 3.0], [5.0, 4.0, 10.0]]), alpha=2.0)
        np.testing.assert_array_equal(prof.median_per_channel, [2.0, 5.0])
        assert prof.alpha == 2.0
        assert prof.theta_min is None

    def test_empty(self):
        with pytest.raises(CalibrationError):
            compute_calibration(SignalBuffer(np.zeros((1, 0))))

    @given(hnp.arrays(float, st.integers(1, 50), elements=st.floats(0, 1e3)), st.randoms())
    def test_order_invariant(self, x, rnd):
        perm = list(x)
        rnd.shuffle(perm)
        a = compute_calibration(SignalBuffer(x)).median_per_channel
        b = compute_calibration(SignalBuffer(np.array(perm))).median_per_channel
        np.testing.assert_array_equal(a, b)

    def test_profile_invariants(self):
        with pytest.raises(CalibrationError):
            CalibrationProfile([-1.0])
        with pytest.raises(ConfigError):
            CalibrationProfile([1.0], alpha=0)
        with pytest.raises(CalibrationError):
            CalibrationProfile([1.0], theta_min=0.0)


class TestAdaptiveNormalize:
    prof = CalibrationProfile([2.0], alpha=4.0)

    def _norm(self, v):
        return adaptive_normalize(SignalBuffer([v]), self.prof).samples[0, 0]

    def test_at_median(self):
        assert self._norm(2.0) == 0.0

    def test_saturates(self):
        assert self._norm(2.0 * (1 + 4.0)) == 1.0
        assert self._norm(1e9) == 1.0

    def test_below_median(self):
        assert self._norm(1.0) == 0.0

    def test_formula(self):
        assert self._norm(6.0) == pytest.approx((6.0 - 2.0) / 8.0, abs=0)

    def test_zero_median_errors(self):
        prof = CalibrationProfile([0.0, 1.0])
        with pytest.raises(CalibrationError, match="channel"):
            adaptive_normalize(SignalBuffer(np.ones((2, 3))), prof)

    def test_zero_median_floor(self):
        prof = CalibrationProfile([0.0], alpha=1.0)
        out = adaptive_normalize(SignalBuffer([[0.0, 1e-6, 2e-6, 1.0]]), prof, median_floor=1e-6).samples[0]
        np.testing.assert_allclose(out, [0.0, 0.0, 1.0, 1.0])

    def test_channel_mismatch(self):
        with pytest.raises(CalibrationError):
            adaptive_normalize(SignalBuffer(np.ones((2, 3))), self.prof)

    @settings(max_examples=200)
    @given(hnp.arrays(float, (3, 40), elements=st.floats(0, 1e4)),
           hnp.arrays(float, 3, elements=st.floats(1e-3, 1e3)),
           st.floats(0.1, 50))
    def test_bounded_and_monotone(self, x, m, alpha):
        prof = CalibrationProfile(m, alpha)
        out = adaptive_normalize(SignalBuffer(x), prof).samples
        assert np.all((out >= 0) & (out <= 1))
        order = np.argsort(x, axis=1, kind="stable")
        sorted_out = np.take_along_axis(out, order, axis=1)
        assert np.all(np.diff(sorted_out, axis=1) >= 0)


class TestPreprocessor:
    def test_chunked_matches_batch(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((2, 4000))
        prof = CalibrationProfile([0.5, 0.7], alpha=4.0)
        batch = adaptive_normalize(rectify(bandpass_filter(SignalBuffer(x, RATE))), prof).samples
        pre = Preprocessor(prof)
        chunks = np.concatenate([pre.process(x[:, i:i + 333]) for i in range(0, 4000, 333)], axis=1)
        np.testing.assert_allclose(chunks, batch, atol=1e-12)


class TestSignalBuffer:
    def test_one_d_promoted(self):
        assert SignalBuffer([1.0, 2.0]).samples.shape == (1, 2)

    def test_bad_rate(self):
        with pytest.raises(ConfigError):
            SignalBuffer([1.0], rate_hz=0)

    def test_bad_dims(self):
        with pytest.raises(InputError):
            SignalBuffer(np.zeros((1, 2, 3)))
