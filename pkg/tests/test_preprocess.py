import math

import numpy as np
import pytest

from hydrocsi.core import (
    DopplerGrid,
    PowerWindow,
    SystemConfig,
    make_sampling_schedule,
)
from hydrocsi.preprocess import (
    WindowFunction,
    csi_power,
    doppler_transform,
    remove_mean,
    window_weights,
)
from hydrocsi.simulator import (
    Impairments,
    NO_IMPAIRMENTS,
    PathModel,
    StaticPath,
    WaterPath,
    WaterTrajectory,
    generate_csi,
)
from hydrocsi.core import CsiWindow


def _power_cfg(geometry, m=4, n=1):
    return SystemConfig(1e9, 1e3, m, n, geometry)


class TestCsiPower:
    def test_unit_modulus_gives_one(self, lab_geometry):
        cfg = _power_cfg(lab_geometry)
        phases = np.random.default_rng(0).uniform(-np.pi, np.pi, (1, 4, 8))
        window = CsiWindow(np.exp(1j * phases), np.arange(8.0), cfg)
        power = csi_power(window)
        np.testing.assert_allclose(power.values, 1.0, atol=1e-12)

    def test_phase_rotation_invariance_float64(self, lab_geometry):
        # pure math level: rotating every sample by a unit phasor changes
        # nothing in the power, to float64 precision
        cfg = _power_cfg(lab_geometry, m=3, n=2)
        rng = np.random.default_rng(1)
        base = rng.standard_normal((2, 3, 16)) + 1j * rng.standard_normal((2, 3, 16))
        rot = np.exp(1j * rng.uniform(0, 2 * np.pi, 16))
        a = csi_power(CsiWindow(base, np.arange(16.0), cfg))
        b = csi_power(CsiWindow(base * rot, np.arange(16.0), cfg))
        np.testing.assert_allclose(a.values, b.values, rtol=1e-9)

    def test_to_cfo_invariance_through_simulator(self, uniform_config):
        statics = [StaticPath(1.0, 10e-9, 0.0)]
        water = WaterPath(0.5, 40e-9, 0.2, PathModel.LINEAR)
        traj = WaterTrajectory(((0.0, 0.0), (60.0, 0.01)))
        sched = make_sampling_schedule(uniform_config)
        clean = generate_csi(uniform_config, statics, water, traj, (), NO_IMPAIRMENTS, sched)
        dirty = generate_csi(
            uniform_config, statics, water, traj, (),
            Impairments(to_cfo_seed=5, hw_phases_rad=(0.7,)), sched,
        )
        pa = csi_power(clean).values
        pb = csi_power(dirty).values
        # float32 storage bounds the agreement
        np.testing.assert_allclose(pa, pb, rtol=5e-6, atol=5e-6)

    def test_two_path_closed_form(self, lab_geometry):
        # one static (a) plus one fixed dynamic (b): the power must equal
        # a^2 + b^2 + 2 a b cos(2 pi f_j (tau_x - tau_s)) exactly
        cfg = SystemConfig(1e9, 1e5, 8, 1, lab_geometry,
                           window_duration_s=4.0, session_duration_s=4.0,
                           gap_duration_s=0.0, intra_session_rate_hz=4.0)
        a_amp, b_amp = 1.0, 0.5
        tau_s, tau_x = 10e-9, 70e-9
        sched = make_sampling_schedule(cfg)
        window = generate_csi(
            cfg, [StaticPath(a_amp, tau_s, 0.0)],
            WaterPath(b_amp, tau_x, 0.0, PathModel.LINEAR),
            WaterTrajectory(((0.0, 0.0),)), (), NO_IMPAIRMENTS, sched,
        )
        power = csi_power(window)
        f = cfg.subcarrier_freqs_hz()
        expected = (
            a_amp**2 + b_amp**2
            + 2 * a_amp * b_amp * np.cos(2 * np.pi * f * (tau_x - tau_s))
        )
        for k in range(sched.size):
            np.testing.assert_allclose(power.values[0, :, k], expected, rtol=1e-5)


class TestRemoveMean:
    def test_constant_goes_to_zero(self, lab_geometry):
        cfg = _power_cfg(lab_geometry)
        p = PowerWindow(np.full((1, 4, 6), 3.7), np.arange(6.0), cfg)
        np.testing.assert_allclose(remove_mean(p).values, 0.0, atol=1e-12)

    def test_two_point_example(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        p = PowerWindow(np.array([[[1.0, 3.0]]]), np.arange(2.0), cfg)
        np.testing.assert_allclose(remove_mean(p).values, [[[-1.0, 1.0]]])

    def test_time_sum_is_zero(self, lab_geometry):
        cfg = _power_cfg(lab_geometry, m=5, n=2)
        rng = np.random.default_rng(3)
        p = PowerWindow(rng.uniform(0, 4, (2, 5, 50)), np.arange(50.0), cfg)
        out = remove_mean(p)
        np.testing.assert_allclose(out.values.sum(axis=2), 0.0, atol=1e-9)

    def test_dc_suppression_in_spectrum(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        t = np.arange(600.0)
        x = 5.0 + np.cos(2 * np.pi * 0.05 * t)
        grid = DopplerGrid.symmetric(0.25, 129)
        raw = PowerWindow(x[None, None, :], t, cfg)
        spec_raw = doppler_transform(raw, grid, WindowFunction.HAMMING)
        spec_rm = doppler_transform(remove_mean(raw), grid, WindowFunction.HAMMING)
        z = grid.zero_index
        ratio = abs(spec_rm.values[0, 0, z]) / abs(spec_raw.values[0, 0, z])
        assert ratio**2 <= 1e-4  # at least 40 dB down in power


class TestDopplerTransform:
    def test_conjugate_symmetry(self, lab_geometry):
        cfg = _power_cfg(lab_geometry, m=3, n=2)
        rng = np.random.default_rng(4)
        t = np.sort(rng.uniform(0, 100, 200))
        p = PowerWindow(rng.standard_normal((2, 3, 200)), t, cfg)
        spec = doppler_transform(p, DopplerGrid.symmetric(0.3, 65))
        np.testing.assert_allclose(
            spec.values, spec.values[:, :, ::-1].conj(), atol=1e-12 * np.abs(spec.values).max()
        )

    def test_uniform_rect_matches_fft(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        n = 64
        t = np.arange(n) / float(n)  # 1 s span, integer frequencies on-grid
        rng = np.random.default_rng(5)
        x = rng.standard_normal(n)
        bins = np.arange(-(n // 2 - 1), n // 2).astype(float)  # odd count, 0 centered
        grid = DopplerGrid(bins)
        spec = doppler_transform(
            PowerWindow(x[None, None, :], t, cfg), grid, WindowFunction.RECT
        )
        dft = np.fft.fft(x) / n
        want = np.array([dft[int(b) % n] for b in bins])
        np.testing.assert_allclose(spec.values[0, 0], want, atol=1e-9)

    def test_linearity(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        rng = np.random.default_rng(6)
        t = np.sort(rng.uniform(0, 50, 120))
        x = rng.standard_normal(120)
        y = rng.standard_normal(120)
        grid = DopplerGrid.symmetric(0.4, 33)

        def tf(v):
            return doppler_transform(
                PowerWindow(v[None, None, :], t, cfg), grid
            ).values[0, 0]

        a, b = 2.3, -1.7
        lhs = tf(a * x + b * y)
        rhs = a * tf(x) + b * tf(y)
        scale = np.abs(rhs).max()
        assert np.abs(lhs - rhs).max() <= 1e-9 * scale

    def test_tone_on_burst_schedule_peaks_at_its_bin(self, mmwave_config):
        sched = make_sampling_schedule(mmwave_config)
        cfg = SystemConfig(28e9, 70e6 / 46, 1, 1, mmwave_config.geometry)
        # grid chosen so 0.05 Hz sits exactly on bin 13
        grid = DopplerGrid.symmetric(128 * 0.05 / 13, 257)
        x = np.cos(2 * np.pi * 0.05 * sched + 0.7)
        spec = doppler_transform(
            remove_mean(PowerWindow(x[None, None, :], sched, cfg)), grid
        )
        z = grid.zero_index
        mag = np.abs(spec.values[0, 0, z + 1:])
        peak = int(np.argmax(mag)) + 1
        assert abs(peak - 13) <= 1

    def test_hamming_sidelobes_below_rect(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        t = np.arange(600.0)
        x = np.cos(2 * np.pi * 0.1 * t)
        # grid 8x finer than the 1/600 Hz resolution so sidelobes are sampled;
        # 0.1 Hz lands exactly on a bin
        grid = DopplerGrid.symmetric(0.2, 1921)
        z = grid.zero_index
        rayleigh_bins = 8

        def max_sidelobe(window_fn, mainlobe_rayleigh):
            spec = doppler_transform(PowerWindow(x[None, None, :], t, cfg), grid, window_fn)
            mag = np.abs(spec.values[0, 0])
            peak = z + int(np.argmax(mag[z:]))
            half = int(mainlobe_rayleigh * rayleigh_bins)
            mask = np.ones_like(mag, bool)
            for center in (peak, grid.mirror_index(peak)):
                mask[max(center - half, 0):center + half + 1] = False
            return mag[mask].max() / mag[peak]

        rect = max_sidelobe(WindowFunction.RECT, 1.3)
        hamming = max_sidelobe(WindowFunction.HAMMING, 2.3)
        assert 20 * math.log10(rect / hamming) >= 25.0

    def test_rejects_bins_beyond_nyquist(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        t = np.arange(100.0)  # 1 Hz sampling, Nyquist 0.5 Hz
        p = PowerWindow(np.ones((1, 1, 100)), t, cfg)
        with pytest.raises(ValueError, match="Nyquist"):
            doppler_transform(p, DopplerGrid.symmetric(0.75, 33))

    def test_window_weights_follow_timestamps(self):
        t = np.array([0.0, 1.0, 50.0, 99.0, 100.0])
        w = window_weights(t, WindowFunction.HAMMING)
        assert w[0] == pytest.approx(0.08)
        assert w[-1] == pytest.approx(0.08)
        assert w[2] == pytest.approx(1.0)

    def test_zero_bin_computed(self, lab_geometry):
        cfg = SystemConfig(1e9, 1e3, 1, 1, lab_geometry)
        t = np.arange(32.0)
        p = PowerWindow(np.ones((1, 1, 32)), t, cfg)
        spec = doppler_transform(p, DopplerGrid.symmetric(0.4, 33), WindowFunction.RECT)
        # un-centered input: all the energy is at DC
        assert abs(spec.values[0, 0, 16]) == pytest.approx(1.0)
