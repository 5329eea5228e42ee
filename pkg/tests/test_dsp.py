"""Spectral estimation, filtering and envelope tests.

Parseval and the pure-tone DFT serve as independent oracles for the
spectrum scaling; filter behavior is checked on the measured frequency
response and on tones pushed through the full channelizer.
"""

import numpy as np
import pytest
from scipy import signal as sig

from hypersense import dsp
from hypersense.errors import EmptyInputError, InsufficientDataError, ParameterError
from hypersense.iqio import IqRecording
from hypersense.noisefloor import DetectedComponent


def tone(fs, n, freq, amp=1.0):
    t = np.arange(n) / fs
    return amp * np.exp(2j * np.pi * freq * t)


def rec(samples, fs=1e6, fc=0.0):
    return IqRecording(samples=np.asarray(samples, dtype=complex), sample_rate_hz=fs, center_freq_hz=fc)


class TestWelchPsd:
    def test_pure_tone_peak_bin(self):
        fs, n = 1.024e6, 1024
        k = 160  # bin index over the shifted axis: freq = -fs/2 + k*fs/n
        freq = -fs / 2 + k * fs / n
        psd = dsp.welch_psd(rec(tone(fs, n, freq), fs), fft_size=n, window="rect", overlap=0.0)
        assert psd.averaging_count == 1
        assert int(np.argmax(psd.values_db)) == k
        assert psd.values_db[k] - np.median(psd.values_db) >= 30.0

    def test_all_zero_input_clamped(self):
        psd = dsp.welch_psd(rec(np.zeros(4096)), fft_size=1024)
        assert np.all(np.isfinite(psd.values_db))
        assert np.all(psd.values_db == 10.0 * np.log10(dsp.EPS_POWER))

    def test_parseval_rect_no_overlap(self):
        rng = np.random.default_rng(5)
        n, fft = 8192, 512
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        psd = dsp.welch_psd(rec(x), fft_size=fft, window="rect", overlap=0.0)
        linear = 10 ** (psd.values_db / 10.0)
        used = x[: (n // fft) * fft]
        assert np.mean(linear) == pytest.approx(np.mean(np.abs(used) ** 2), rel=1e-6)

    def test_shift_covariance_on_tones(self):
        fs, n = 1e6, 2048
        base = tone(fs, n, -200e3)
        shift_bins = 300
        f0 = shift_bins * fs / 2048
        shifted = base * np.exp(2j * np.pi * f0 * np.arange(n) / fs)
        p1 = dsp.welch_psd(rec(base, fs), 2048, "rect", 0.0)
        p2 = dsp.welch_psd(rec(shifted, fs), 2048, "rect", 0.0)
        assert np.allclose(np.roll(p1.values_db, shift_bins), p2.values_db, atol=1e-6)

    def test_axis_layout(self):
        fs = 2e6
        psd = dsp.welch_psd(rec(np.ones(4096), fs), fft_size=1024)
        assert psd.freq_start_hz == -fs / 2
        assert psd.freq_step_hz == pytest.approx(fs / 1024)
        assert len(psd.values_db) == 1024

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            dsp.welch_psd(rec(np.ones(100)), fft_size=1024)
        with pytest.raises(ParameterError):
            dsp.welch_psd(rec(np.ones(4096)), fft_size=1000)  # not a power of two
        with pytest.raises(ParameterError):
            dsp.welch_psd(rec(np.ones(4096)), fft_size=4)
        with pytest.raises(ParameterError):
            dsp.welch_psd(rec(np.ones(4096)), fft_size=1024, overlap=1.0)
        with pytest.raises(ParameterError):
            dsp.welch_psd(rec(np.ones(4096)), fft_size=1024, window="flattop")


class TestDesignBandpass:
    def test_lowpass_passes_inband_tone(self):
        fs = 10e6
        filt = dsp.design_bandpass(0.0, 1e6, fs, 100e3, 60.0)
        w, h = sig.freqz(filt.taps, worN=4096, fs=fs)
        gain_db = 20 * np.log10(np.abs(h) + 1e-12)
        inband = gain_db[w <= 0.4e6]
        assert np.all(np.abs(inband) < 1.0)
        stop = gain_db[w >= 0.5e6 + 100e3]
        assert np.all(stop < -60.0)

    def test_taps_symmetric_odd(self):
        filt = dsp.design_bandpass(1e6, 0.5e6, 10e6, 100e3, 50.0)
        taps = filt.taps
        assert len(taps) % 2 == 1
        assert np.array_equal(taps, taps[::-1])

    def test_full_band_identity(self):
        fs = 4e6
        filt = dsp.design_bandpass(0.0, fs, fs, 100e3, 60.0)
        rng = np.random.default_rng(0)
        x = rng.normal(size=1000) + 1j * rng.normal(size=1000)
        y = dsp.apply_fir(x, filt.taps)
        ratio_db = 10 * np.log10(np.mean(np.abs(y) ** 2) / np.mean(np.abs(x) ** 2))
        assert abs(ratio_db) < 0.1

    def test_infeasible_band(self):
        with pytest.raises(ParameterError):
            dsp.design_bandpass(2e6, 2e6, 5e6, 100e3)  # fc + bw/2 > fs/2
        with pytest.raises(ParameterError):
            dsp.design_bandpass(0.0, -1.0, 5e6, 100e3)
        with pytest.raises(ParameterError):
            dsp.design_bandpass(0.0, 4.9e6, 5e6, 200e3)  # transition does not fit


class TestChannelize:
    def _component(self, center, width):
        return DetectedComponent(0, 0, center, width, 0.0, 0.0)

    def test_inband_tone_survives(self):
        fs, n = 10e6, 40000
        comp = self._component(1e6, 1e6)
        x = tone(fs, n, 1.1e6)  # inside [0.5, 1.5] MHz
        out = dsp.channelize(rec(x, fs), comp, guard_factor=1.25)
        loss_db = 10 * np.log10(np.mean(np.abs(out.samples) ** 2) / 1.0)
        assert abs(loss_db) < 1.0
        assert out.center_freq_hz == pytest.approx(1e6)

    def test_out_of_band_tone_attenuated(self):
        fs, n = 10e6, 40000
        comp = self._component(1e6, 1e6)
        x = tone(fs, n, 3e6)  # 2 bandwidths away
        out = dsp.channelize(rec(x, fs), comp, guard_factor=1.25, stop_atten_db=60.0)
        steady = out.samples[1000:-1000]  # response evaluation: skip edge transients
        atten_db = -10 * np.log10(np.mean(np.abs(steady) ** 2) + 1e-30)
        assert atten_db >= 60.0

    def test_full_band_passthrough(self):
        fs, n = 4e6, 5000
        rng = np.random.default_rng(2)
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        comp = self._component(0.0, fs)
        out = dsp.channelize(rec(x, fs), comp, guard_factor=1.0)
        assert out.sample_rate_hz == fs  # no decimation possible
        assert np.allclose(out.samples, x)

    def test_decimation_rate(self):
        fs = 16e6
        comp = self._component(0.0, 1e6)
        x = tone(fs, 64000, 0.2e6)
        out = dsp.channelize(rec(x, fs), comp, guard_factor=1.0)
        # smallest power-of-two-divisor rate >= 2.5 MHz is 16/4 = 4 MHz
        assert out.sample_rate_hz == pytest.approx(4e6)
        assert len(out.samples) == 16000

    def test_absolute_center_offsets(self):
        fs = 8e6
        comp = self._component(2.44e9 + 1e6, 1e6)
        x = tone(fs, 30000, 1e6)
        out = dsp.channelize(rec(x, fs, fc=2.44e9), comp, guard_factor=1.25)
        # the tone sits at the component center: mixed to DC
        pw = np.abs(np.fft.fft(out.samples))
        assert int(np.argmax(pw)) == 0

    def test_component_outside_band(self):
        comp = self._component(6e6, 1e6)
        with pytest.raises(ParameterError):
            dsp.channelize(rec(np.ones(1000), 8e6), comp)


class TestPowerEnvelope:
    def test_constant_input(self):
        env, (t0, dt) = dsp.power_envelope(rec(2.0 * np.ones(1000)), smooth_len=10)
        assert np.allclose(env, 10 * np.log10(4.0))
        assert t0 == 0.0
        assert dt == pytest.approx(1e-6)

    def test_burst_run_length(self):
        n, fs = 20000, 1e6
        x = np.zeros(n, dtype=complex)
        x[5000:6000] = 1.0
        env, _ = dsp.power_envelope(rec(x, fs), smooth_len=100)
        above = env > -40.0
        assert 900 <= int(above.sum()) <= 1100

    def test_smooth_one_is_raw_power(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=200) + 1j * rng.normal(size=200)
        env, _ = dsp.power_envelope(rec(x), smooth_len=1)
        assert np.allclose(env, 10 * np.log10(np.abs(x) ** 2))

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            dsp.power_envelope(rec(np.array([])))

    def test_locality(self):
        rng = np.random.default_rng(9)
        a = rng.normal(size=2000) + 0j
        b = rng.normal(size=2000) + 0j
        w = 50
        env_cat, _ = dsp.power_envelope(rec(np.concatenate([a, b])), smooth_len=w)
        env_a, _ = dsp.power_envelope(rec(a), smooth_len=w)
        env_b, _ = dsp.power_envelope(rec(b), smooth_len=w)
        assert np.allclose(env_cat[w : 2000 - w], env_a[w : 2000 - w])
        assert np.allclose(env_cat[2000 + w : -w], env_b[w:-w])
