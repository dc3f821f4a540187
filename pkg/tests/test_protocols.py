import numpy as np
import pytest
from dataclasses import replace

from rotorspin.protocols import (
    JitterModel,
    ReadoutModel,
    SimConfig,
    alignment_phase_error,
    fit_decay,
    fit_fringe,
    monte_carlo,
    multi_period_echo,
    multi_period_echo_decay,
    rabi,
    ramsey,
    ramsey_decay,
    readout_window,
    spin_echo,
    spin_echo_decay,
    spin_lock,
)
from rotorspin.util import TWO_PI

FULL_AMPLITUDE = 0.025 / 2  # contrast_max * polarization / 2


def quiet(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, jitter=JitterModel(sigma_period_s=0.0), shots=1, **kw)


@pytest.fixture(scope="module")
def cfg(sim_config):
    return replace(sim_config, shots=300)


@pytest.fixture(scope="module")
def ramsey_t0_decay(cfg):
    taus = np.array([10, 25, 50, 75, 100, 150, 200, 300, 400, 500]) * 1e-6
    return ramsey_decay(0.0, taus, cfg)


class TestReadoutWindow:
    def test_zero_offset(self):
        assert readout_window(0.0, ReadoutModel()) == 1.0

    def test_half_fwhm(self):
        assert readout_window(2e-6, ReadoutModel()) == pytest.approx(0.5)

    def test_custom_fwhm(self):
        m = ReadoutModel(window_fwhm_s=4e-6)
        assert readout_window(2e-6, m) == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValueError, match="contrast_max"):
            ReadoutModel(contrast_max=1.5)
        with pytest.raises(ValueError, match="polarization"):
            ReadoutModel(polarization_fraction=-0.1)


class TestFitFringe:
    def test_pure_cosine(self):
        phases = np.linspace(0, TWO_PI, 13)
        fit = fit_fringe(phases, np.cos(phases - 0.7))
        assert fit.amplitude.value == pytest.approx(1.0, abs=1e-10)
        assert fit.phase_rad.value == pytest.approx(0.7, abs=1e-10)

    def test_constant_signal(self):
        phases = np.linspace(0, TWO_PI, 13)
        fit = fit_fringe(phases, np.full(13, 0.42))
        assert fit.amplitude.value == pytest.approx(0.0, abs=1e-12)
        assert fit.offset.value == pytest.approx(0.42)

    def test_noisy_recovery_within_two_sigma(self, rng):
        phases = np.linspace(0, TWO_PI, 25)
        signal = 0.01 + 0.025 * np.cos(phases - 1.2) + rng.normal(0, 0.002, 25)
        fit = fit_fringe(phases, signal)
        assert abs(fit.amplitude.value - 0.025) <= 2 * fit.amplitude.stderr

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="5 phase samples"):
            fit_fringe([0, 1, 2, 3], [0, 0, 0, 0])

    def test_span_requirement(self):
        phases = np.linspace(0, 3.0, 8)
        with pytest.raises(ValueError, match="2\\*pi"):
            fit_fringe(phases, np.cos(phases))

    def test_amplitude_nonnegative(self, rng):
        phases = np.linspace(0, TWO_PI, 13)
        for _ in range(10):
            fit = fit_fringe(phases, rng.normal(0, 1e-3, 13))
            assert fit.amplitude.value >= 0.0


class TestFitDecay:
    def test_exponential_recovery(self, rng):
        taus = np.linspace(0.2e-3, 12e-3, 10)
        amps = 0.0125 * np.exp(-taus / 5e-3) * (1 + rng.normal(0, 0.01, 10))
        fit = fit_decay(taus, amps, fix_exponent=1.0)
        assert fit.t2_s.value == pytest.approx(5e-3, rel=0.05)

    def test_constant_amplitudes_lower_bound(self):
        taus = np.linspace(1e-4, 1e-3, 6)
        fit = fit_decay(taus, np.full(6, 0.012))
        assert fit.t2_is_lower_bound
        assert np.isinf(fit.t2_s.value)

    def test_gaussian_exponent_recovery(self, rng):
        taus = np.linspace(0.5e-3, 8e-3, 12)
        amps = 0.0125 * np.exp(-((taus / 4e-3) ** 2)) * (1 + rng.normal(0, 0.005, 12))
        fit = fit_decay(taus, amps)
        assert fit.exponent.value == pytest.approx(2.0, abs=0.2)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            fit_decay([1, 2, 3, 4], [0, 0, 0, 0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            fit_decay([1, 2, 3, 4], [1, -0.1, 0.5, 0.2])


class TestRabi:
    def test_stationary_pi_time(self, sim_config):
        cfg = quiet(sim_config, stationary=True)
        durations = np.linspace(0.0, 21e-6, 22)
        res = rabi(0.0, durations, cfg)
        f = res.fits["rabi_frequency_hz"].value
        assert 1.0 / (2.0 * f) == pytest.approx(7e-6, rel=0.02)

    def test_zero_duration_is_bright_reference(self, sim_config):
        cfg = quiet(sim_config)
        res = rabi(0.0, np.array([0.0, 3e-6]), cfg)
        assert res.signal[0] == 0.0  # no dark-state population: bright level

    def test_ratio_tracks_augmentation(self, sim_config):
        cfg = quiet(sim_config)
        period = cfg.rotation.period_s
        f0 = None
        ratios = {}
        for t_d in (0.0, 0.5 * period):
            f_local = float(cfg.rabi_of_phi(TWO_PI * t_d / period)) / TWO_PI
            durations = np.linspace(0.0, 1.5 / f_local, 18)
            res = rabi(t_d, durations, cfg)
            fit = res.fits["rabi_frequency_hz"].value
            window = TWO_PI * (t_d + np.linspace(0, durations[-1], 64)) / period
            model = float(np.mean(cfg.rabi_of_phi(window))) / TWO_PI
            ratios[t_d] = (fit, model)
        sim_ratio = ratios[0.5 * period][0] / ratios[0.0][0]
        model_ratio = ratios[0.5 * period][1] / ratios[0.0][1]
        assert sim_ratio == pytest.approx(model_ratio, rel=0.05)

    def test_overrun_rejected(self, sim_config):
        cfg = quiet(sim_config)
        with pytest.raises(ValueError, match="readout"):
            rabi(900e-6, np.array([200e-6]), cfg)


class TestRamsey:
    def test_short_tau_full_contrast(self, sim_config):
        cfg = quiet(sim_config)
        d1 = cfg.pulse_duration(np.pi / 2, 0.0)
        res = ramsey(0.0, 1.01 * d1, cfg)
        assert res.fits["amplitude"].value == pytest.approx(FULL_AMPLITUDE, rel=1e-3)

    def test_zero_jitter_amplitude_tau_independent(self, sim_config):
        # no decay without jitter; the residual 0.2% variation is the real
        # flip-angle error of a pulse whose coupling drifts during the gate
        cfg = quiet(sim_config)
        amps = [ramsey(0.0, tau, cfg).fits["amplitude"].value
                for tau in (50e-6, 400e-6)]
        assert amps[0] == pytest.approx(amps[1], rel=5e-3)

    def test_jitter_dephasing_time_in_band(self, ramsey_t0_decay):
        t2star = ramsey_t0_decay.fits["t2star_s"].value
        assert 30e-6 <= t2star <= 300e-6

    def test_tau_too_short_rejected(self, sim_config):
        with pytest.raises(ValueError, match="too short"):
            ramsey(0.0, 1e-6, quiet(sim_config))

    def test_sequence_must_fit_in_period(self, sim_config):
        with pytest.raises(ValueError, match="period"):
            ramsey(900e-6, 200e-6, quiet(sim_config))


class TestSpinEcho:
    def test_zero_jitter_full_amplitude(self, sim_config):
        # echo cancels the deterministic detuning; the mid-rotation pi pulse
        # carries a ~1% flip-angle calibration error (coupling drifts over
        # its 10s-of-us duration), which bounds the recovered amplitude
        cfg = quiet(sim_config)
        res = spin_echo(0.0, 300e-6, cfg)
        assert res.fits["amplitude"].value >= 0.98 * FULL_AMPLITUDE

    def test_collapse_when_reaching_alignment_region(self, cfg):
        early = spin_echo(200e-6, 300e-6, cfg, _index=50)
        late = spin_echo(200e-6, 700e-6, cfg, _index=51)
        assert late.fits["amplitude"].value < 0.25 * early.fits["amplitude"].value

    def test_jitter_coherence_time_in_band(self, cfg):
        taus = np.array([25, 50, 100, 150, 200, 300, 450, 600, 800]) * 1e-6
        res = spin_echo_decay(0.0, taus, cfg)
        assert 60e-6 <= res.fits["t2_s"].value <= 600e-6


class TestMultiPeriodEcho:
    def test_odd_count_rejected(self, sim_config):
        with pytest.raises(ValueError, match="even"):
            multi_period_echo(3, quiet(sim_config))

    def test_zero_jitter_full_amplitude(self, sim_config):
        res = multi_period_echo(2, quiet(sim_config))
        assert res.fits["amplitude"].value == pytest.approx(FULL_AMPLITUDE, rel=2e-3)

    def test_jittered_amplitude_retained(self, cfg):
        for i, n in enumerate((2, 4, 6)):
            res = multi_period_echo(n, cfg, _index=20 + i)
            assert res.fits["amplitude"].value >= 0.8 * FULL_AMPLITUDE

    def test_intrinsic_envelope_dominates_fit(self, cfg):
        cfg65 = replace(cfg, intrinsic_t2_s=6.5e-3)
        res = multi_period_echo_decay([2, 4, 6, 8, 10, 12], cfg65)
        assert res.fits["t2_s"].value == pytest.approx(5e-3, rel=0.3)

    def test_beats_ramsey_by_factor_five(self, cfg, ramsey_t0_decay):
        res = multi_period_echo_decay([2, 4, 6, 8, 10, 12], cfg)
        t2_mp = res.fits["t2_s"].value
        t2star = ramsey_t0_decay.fits["t2star_s"].value
        assert t2_mp >= 5.0 * t2star


class TestSpinLock:
    def test_zero_lock_equals_short_ramsey(self, sim_config):
        cfg = quiet(sim_config)
        res = spin_lock(np.array([0.0]), cfg)
        assert res.signal[0] == pytest.approx(FULL_AMPLITUDE, rel=2e-3)

    def test_lock_preserves_coherence_under_jitter(self, cfg):
        period = cfg.rotation.period_s
        res = spin_lock(np.array([period]), cfg)
        res0 = spin_lock(np.array([period]), quiet(cfg))
        assert res.signal[0] >= 0.9 * res0.signal[0]

    def test_without_lock_drive_decoheres_like_ramsey(self, cfg):
        # remove the lock pulse and the sequence degenerates to a Ramsey of
        # the same span, whose fringe has collapsed at half a period
        period = cfg.rotation.period_s
        lock = 0.5 * period
        locked = spin_lock(np.array([lock]), cfg)
        d1 = cfg.pulse_duration(np.pi / 2, 0.0)
        d3 = cfg.pulse_duration(np.pi / 2, d1 + lock)
        unlocked = ramsey(0.0, lock + d1 / 2 + d3 / 2, cfg, _index=70)
        assert unlocked.fits["amplitude"].value < 0.4 * locked.signal[0]

    def test_negative_duration_rejected(self, sim_config):
        with pytest.raises(ValueError, match=">= 0"):
            spin_lock(np.array([-1e-6]), quiet(sim_config))


class TestMonteCarlo:
    def test_zero_sigma_matches_deterministic(self, sim_config):
        jitter0 = JitterModel(sigma_period_s=0.0)
        a = monte_carlo("ramsey", {"tau_s": 100e-6}, jitter0, 3, sim_config)
        b = monte_carlo("ramsey", {"tau_s": 100e-6}, jitter0, 1, sim_config)
        assert np.array_equal(a.signal, b.signal)

    def test_shot_doubling_halves_stderr(self, sim_config):
        jitter = JitterModel(sigma_period_s=323e-9)
        a = monte_carlo("ramsey", {"tau_s": 150e-6}, jitter, 250, sim_config)
        b = monte_carlo("ramsey", {"tau_s": 150e-6}, jitter, 500, sim_config)
        ratio = np.mean(b.stderr) / np.mean(a.stderr)
        assert ratio == pytest.approx(1.0 / np.sqrt(2.0), rel=0.2)

    def test_unknown_protocol(self, sim_config):
        with pytest.raises(ValueError, match="unknown protocol"):
            monte_carlo("nope", {}, JitterModel(), 1, sim_config)

    def test_alignment_phase_error_quadratic_in_sigma(self, sim_config):
        sigmas = np.array([161.5e-9, 323e-9, 646e-9])
        vals = [alignment_phase_error(sim_config, s, n_shots=150) for s in sigmas]
        slope = np.polyfit(np.log(sigmas), np.log(vals), 1)[0]
        assert slope > 1.5  # superlinear: quadratic amplification


class TestInvariantsAndModel:
    def test_seeded_determinism(self, sim_config):
        cfg = replace(sim_config, shots=50)
        a = ramsey(0.0, 120e-6, cfg)
        b = ramsey(0.0, 120e-6, cfg)
        assert np.array_equal(a.signal, b.signal)
        assert np.array_equal(a.stderr, b.stderr)

    def test_seed_changes_output(self, sim_config):
        cfg1 = replace(sim_config, shots=50)
        cfg2 = replace(
            sim_config, shots=50,
            jitter=replace(sim_config.jitter, seed=99),
        )
        a = ramsey(0.0, 120e-6, cfg1)
        b = ramsey(0.0, 120e-6, cfg2)
        assert not np.array_equal(a.signal, b.signal)

    def test_signals_bounded_by_contrast(self, cfg):
        res = ramsey(0.0, 150e-6, cfg, _index=90)
        assert np.all(res.signal >= 0.0)
        assert np.all(res.signal <= cfg.readout.contrast_max)

    def test_coherence_ordering_alignment_vs_flat(self, cfg, ramsey_t0_decay):
        taus = np.array([25, 50, 100, 150, 200, 300, 400, 500]) * 1e-6
        flat = ramsey_decay(200e-6, taus, cfg)
        t2_flat = flat.fits["t2star_s"].value  # may be a lower bound (inf)
        assert ramsey_t0_decay.fits["t2star_s"].value < t2_flat

    def test_white_jitter_destroys_multi_period_echo(self, cfg):
        # the iid-period noise mode leaves nothing for the echo to cancel
        white = replace(cfg, jitter=replace(cfg.jitter, mode="white"), shots=200)
        res = multi_period_echo(4, white, _index=95)
        assert res.fits["amplitude"].value < 0.4 * FULL_AMPLITUDE

    def test_photon_noise_reproducible(self, sim_config):
        cfg = replace(sim_config, shots=40, photons_per_shot=1e4)
        a = ramsey(0.0, 100e-6, cfg)
        b = ramsey(0.0, 100e-6, cfg)
        assert np.array_equal(a.signal, b.signal)
        assert np.mean(a.stderr) > 0


class TestJitterModel:
    def test_validation(self):
        with pytest.raises(ValueError, match="sigma"):
            JitterModel(sigma_period_s=-1e-9)
        with pytest.raises(ValueError, match="white_fraction"):
            JitterModel(white_fraction=1.5)
        with pytest.raises(ValueError, match="mode"):
            JitterModel(mode="pink")

    def test_same_seed_same_draws(self):
        j = JitterModel(seed=7)
        r1 = np.random.default_rng(np.random.SeedSequence([7, 1, 0]))
        r2 = np.random.default_rng(np.random.SeedSequence([7, 1, 0]))
        assert np.array_equal(j.draw(r1, 10), j.draw(r2, 10))

    def test_modes(self):
        rng = np.random.default_rng(0)
        drift = JitterModel(mode="drift").draw(rng, 8)
        assert np.ptp(drift) == 0.0
        rng = np.random.default_rng(0)
        white = JitterModel(mode="white").draw(rng, 8)
        assert np.ptp(white) > 0.0
