import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from rotorspin.feedforward import (
    FMProfile,
    GateWindow,
    Waveform,
    export_waveform,
    fm_from_track,
    import_waveform,
    synthesize,
)
from rotorspin.spectral import transition_frequency
from rotorspin.util import TWO_PI


def constant_profile(f0=5.0e6, t_end=1e-4, n=4097):
    t = np.linspace(0.0, t_end, n)
    return FMProfile(time_s=t, freq_hz=np.full(n, f0), phase_rad=TWO_PI * f0 * t)


class TestFMProfile:
    def test_constant_frequency_gives_linear_phase(self):
        p = constant_profile()
        slope = np.diff(p.phase_rad) / np.diff(p.time_s)
        assert np.allclose(slope, TWO_PI * 5.0e6, rtol=1e-12)

    def test_fixed_field_track_gives_linear_phase(self):
        # cone angle zero keeps B aligned for the whole rotation: the
        # transition frequency is constant and the accumulated phase linear
        from rotorspin.geometry import FieldGeometry, RotationConfig
        from rotorspin.spectral import build_track
        from rotorspin.spincore import PhysicalConstants

        tr = build_track(FieldGeometry(cone_angle_rad=0.0), RotationConfig(),
                         PhysicalConstants(), 256)
        p = fm_from_track(tr, samples_per_period=2048)
        slope = np.diff(p.phase_rad) / np.diff(p.time_s)
        assert np.ptp(slope) / np.mean(slope) < 1e-9
        assert np.mean(slope) == pytest.approx(TWO_PI * p.freq_hz[0], rel=1e-9)

    def test_phase_monotone(self, track, sim_config, profile):
        assert np.all(np.diff(profile.phase_rad) > 0)

    def test_accumulated_phase_against_fine_quadrature(self, track, sim_config):
        # oracle: the same integral at 10x the sampling
        p = fm_from_track(track, sim_config.rotation)
        p10 = fm_from_track(track, sim_config.rotation,
                            samples_per_period=10 * 16384)
        assert p.phase_rad[-1] == pytest.approx(p10.phase_rad[-1], abs=1e-6)
        mean_f = p10.phase_rad[-1] / (TWO_PI * sim_config.rotation.period_s)
        assert p.phase_rad[-1] == pytest.approx(
            TWO_PI * mean_f * sim_config.rotation.period_s, rel=1e-9)

    def test_trapezoid_matches_midpoint_rule(self, track, sim_config, profile):
        f = transition_frequency(track).copy()
        f[-1] = f[0]
        spline = CubicSpline(track.phi_grid, f, bc_type="periodic")
        t = profile.time_s
        tm = t[:-1] + np.diff(t) / 2
        period = sim_config.rotation.period_s
        midpoint = TWO_PI * np.sum(spline(np.mod(TWO_PI * tm / period, TWO_PI))
                                   * np.diff(t))
        assert abs(profile.phase_rad[-1] - midpoint) < 1e-7

    def test_extremes_match_track(self, track, profile):
        f = transition_frequency(track)
        assert profile.freq_hz.max() == pytest.approx(f.max(), rel=1e-6)
        assert profile.freq_hz.min() == pytest.approx(f.min(), rel=1e-6)

    def test_integer_periods(self, track, sim_config):
        p = fm_from_track(track, sim_config.rotation, n_periods=3)
        assert p.time_s[-1] == pytest.approx(3 * sim_config.rotation.period_s)
        with pytest.raises(ValueError, match="n_periods"):
            fm_from_track(track, sim_config.rotation, n_periods=0)


class TestSynthesize:
    def test_empty_gates_all_zero(self):
        w = synthesize(constant_profile(), [], 1e8)
        assert w.samples.shape == (10000,)
        assert np.all(w.samples == 0.0)

    def test_fft_peak_at_carrier(self):
        w = synthesize(constant_profile(), [GateWindow(0.0, 1e-4)], 1e8)
        spectrum = np.abs(np.fft.rfft(w.samples))
        f_peak = np.fft.rfftfreq(w.samples.size, 1e-8)[np.argmax(spectrum)]
        assert abs(f_peak - 5.0e6) <= 1e8 / w.samples.size  # one bin

    def test_phase_continuous_across_gate_seam(self):
        fs = 1e8
        p = constant_profile()
        split = [GateWindow(0.0, 5e-5), GateWindow(5e-5, 5e-5)]
        w = synthesize(p, split, fs)
        jump = np.max(np.abs(np.diff(w.samples)))
        assert jump <= 1.0 * TWO_PI * 5.0e6 / fs  # bounded by the slew rate

    def test_gated_equals_ungated_times_indicator(self):
        fs = 1e8
        p = constant_profile()
        gates = [GateWindow(1e-5, 2e-5, phase_offset_rad=0.4),
                 GateWindow(6e-5, 1e-5, phase_offset_rad=0.4)]
        gated = synthesize(p, gates, fs)
        full = synthesize(p, [GateWindow(0.0, 1e-4, phase_offset_rad=0.4)], fs)
        t = np.arange(gated.samples.size) / fs
        on = np.zeros_like(t, dtype=bool)
        for g in gates:
            on |= (t >= g.start_s) & (t < g.end_s)
        assert np.array_equal(gated.samples, np.where(on, full.samples, 0.0))

    def test_gate_shift_by_one_period_only_shifts(self, track, sim_config):
        # the frequency profile repeats each period; a free-running carrier
        # additionally advances by the per-period accumulated phase, so the
        # shifted gate equals the time-shifted original once that constant
        # is folded into the gate phase offset
        period = sim_config.rotation.period_s
        p = fm_from_track(track, sim_config.rotation, n_periods=2,
                          samples_per_period=4096)
        fs = 6.4e7
        phi_period = float(p.phase_at(period))
        g1 = GateWindow(1e-4 + period, 5e-5, phase_offset_rad=0.3)
        g0_adj = GateWindow(1e-4, 5e-5, phase_offset_rad=0.3 + phi_period)
        w1 = synthesize(p, [g1], fs)
        w0 = synthesize(p, [g0_adj], fs)
        shift = int(round(period * fs))
        a = w0.samples[int(1e-4 * fs):int(1.5e-4 * fs)]
        b = w1.samples[int(1e-4 * fs) + shift:int(1.5e-4 * fs) + shift]
        assert np.max(np.abs(a - b)) < 2e-5  # quadrature-level agreement

    def test_undersampling_rejected(self):
        with pytest.raises(ValueError, match="undersample"):
            synthesize(constant_profile(), [GateWindow(0.0, 1e-4)], 4.9e7)

    def test_overlapping_gates_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            synthesize(constant_profile(),
                       [GateWindow(0.0, 5e-5), GateWindow(4e-5, 5e-5)], 1e8)

    def test_negative_duration_rejected(self):
        with pytest.raises(ValueError, match="duration"):
            GateWindow(0.0, -1e-6)

    def test_amplitude_bounded(self, profile):
        w = synthesize(profile, [GateWindow(0.0, 1e-3, amplitude_scale=1.0)], 1e8)
        assert np.max(np.abs(w.samples)) <= 1.0


class TestExport:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        w = Waveform(samples=rng.uniform(-1, 1, 1000), sample_rate_hz=1e8)
        path = tmp_path / "wave.csv"
        export_waveform(w, path)
        back = import_waveform(path)
        assert back.sample_rate_hz == w.sample_rate_hz
        assert np.array_equal(back.samples, w.samples)

    def test_empty_waveform_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        export_waveform(Waveform(samples=np.array([]), sample_rate_hz=5e7), path)
        lines = path.read_text().splitlines()
        assert lines == ["# sample_rate_hz=50000000"]

    def test_line_count(self, tmp_path):
        w = synthesize(constant_profile(t_end=1e-3, n=65537),
                       [GateWindow(0.0, 1e-3)], 1e8)
        path = tmp_path / "wave.csv"
        export_waveform(w, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 100000 + 1

    def test_unwritable_path_raises(self):
        w = Waveform(samples=np.zeros(3), sample_rate_hz=1e8)
        with pytest.raises(OSError, match="no/such/dir"):
            export_waveform(w, "/no/such/dir/wave.csv")
