"""Full experiment simulation on the reduced qubit.

Each protocol prepares the polarized bright state at the field-alignment
point, applies gated feedforward-drive pulses in the frame rotating with the
drive phase, and reads out the dark-state population. The drive frequency
always follows the nominal rotation clock while the physical rotation phase
is built from jittered period draws, so imperfect mechanical rotation enters
exactly as a drive-qubit detuning history: near the alignment point the
transition frequency changes fast and small period errors are amplified into
large relative-phase errors, away from it they are suppressed, and phases
accumulated in consecutive whole periods cancel pairwise in even-period
echoes.

Jitter is drawn per shot as a slow per-shot speed offset plus white
per-period noise (see JitterModel); the published period standard deviation
fixes the total, and the split is anchored to the published multi-period
echo coherence time. Signals are reported in fluorescence-contrast units:

    signal = contrast_max * polarization_fraction * P_dark (+ photon noise)

so 0 is the bright |0,+1> reference level.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit

from rotorspin.dynamics import su2_apply
from rotorspin.geometry import FieldGeometry, RotationConfig, rf_axis_nv_frame
from rotorspin.spectral import (
    AdiabaticTrack,
    build_track,
    tracked_matrix_element,
    transition_frequency,
)
from rotorspin.spincore import PhysicalConstants
from rotorspin.util import TWO_PI

__all__ = [
    "JitterModel",
    "ReadoutModel",
    "FittedValue",
    "FringeFit",
    "DecayFit",
    "ProtocolResult",
    "SimConfig",
    "FitError",
    "readout_window",
    "fit_fringe",
    "fit_decay",
    "rabi",
    "ramsey",
    "spin_echo",
    "multi_period_echo",
    "spin_lock",
    "ramsey_decay",
    "spin_echo_decay",
    "multi_period_echo_decay",
    "monte_carlo",
    "alignment_phase_error",
]

DEFAULT_PHASES = np.linspace(0.0, TWO_PI, 13)

_FREE_DT_S = 2.5e-7
_GATE_DT_S = 1e-7
_LONG_GATE_DT_S = 2.5e-7
_LONG_GATE_S = 1e-4


class FitError(RuntimeError):
    """A least-squares fit failed to converge."""


@dataclass(frozen=True)
class JitterModel:
    """Rotation-period noise: per-period Gaussian draws around the nominal T.

    ``sigma_period_s`` is the total per-period standard deviation. The motor
    speed wanders slowly, so within one experimental shot the period errors
    are strongly correlated; ``white_fraction`` is the fraction of sigma in
    the per-period-independent (white) component, the remainder being a
    per-shot common offset. The default split (0.2) reproduces the observed
    multi-period echo coherence time when the intrinsic envelope is enabled;
    mode "white" makes all draws independent and "drift" fully correlated.

    The draw for the period preceding the first alignment is included, so the
    sequence clock (triggered one period ahead) carries the same timing
    noise relative to the physical alignment.
    """

    sigma_period_s: float = 323e-9
    seed: int = 0
    white_fraction: float = 0.2
    mode: str = "drift+white"

    def __post_init__(self):
        if self.sigma_period_s < 0:
            raise ValueError(f"sigma_period_s must be >= 0, got {self.sigma_period_s}")
        if not (0.0 <= self.white_fraction <= 1.0):
            raise ValueError(f"white_fraction must be in [0, 1], got {self.white_fraction}")
        if self.mode not in ("drift+white", "white", "drift"):
            raise ValueError(f"unknown jitter mode {self.mode!r}")

    def draw(self, rng: np.random.Generator, n_periods: int) -> np.ndarray:
        """Period errors for one shot: entry 0 is the synchronization period
        (trigger to first alignment), entries 1..n the following periods."""
        s = self.sigma_period_s
        if s == 0.0:
            return np.zeros(n_periods + 1)
        if self.mode == "white":
            return rng.normal(0.0, s, n_periods + 1)
        if self.mode == "drift":
            return np.full(n_periods + 1, rng.normal(0.0, s))
        sw = s * self.white_fraction
        ss = math.sqrt(max(s * s - sw * sw, 0.0))
        return rng.normal(0.0, ss) + rng.normal(0.0, sw, n_periods + 1)


@dataclass(frozen=True)
class ReadoutModel:
    """Phenomenological optical preparation/readout parameters.

    ``contrast_max`` defaults to the rotating value (0.025); a stationary
    experiment reaches about 0.06. The Gaussian window describes how fast
    the usable polarization decays as the laser timing slides off the
    alignment point.
    """

    polarization_fraction: float = 1.0
    contrast_max: float = 0.025
    window_fwhm_s: float = 4e-6

    STATIONARY_CONTRAST = 0.06

    def __post_init__(self):
        if not (0.0 <= self.polarization_fraction <= 1.0):
            raise ValueError(
                f"polarization_fraction must be in [0, 1], got {self.polarization_fraction}"
            )
        if not (0.0 <= self.contrast_max <= 1.0):
            raise ValueError(f"contrast_max must be in [0, 1], got {self.contrast_max}")
        if self.window_fwhm_s <= 0:
            raise ValueError(f"window_fwhm_s must be positive, got {self.window_fwhm_s}")


def readout_window(laser_on_offset_s: float, model: ReadoutModel) -> float:
    """Gaussian polarization factor for a laser timing offset from alignment:
    exp(-4 ln2 offset^2 / FWHM^2); 0.5 at offset = FWHM/2."""
    x = laser_on_offset_s / model.window_fwhm_s
    return float(np.exp(-4.0 * np.log(2.0) * x * x))


@dataclass(frozen=True)
class FittedValue:
    value: float
    stderr: float


@dataclass(frozen=True)
class FringeFit:
    """Least-squares fit of a + b cos(phi - phi0) with b >= 0."""

    amplitude: FittedValue
    phase_rad: FittedValue
    offset: FittedValue


@dataclass(frozen=True)
class DecayFit:
    """Fit of A0 exp(-(tau/T2)^p); T2 is a lower bound when no decay is seen."""

    t2_s: FittedValue
    exponent: FittedValue
    amplitude0: FittedValue
    t2_is_lower_bound: bool = False


@dataclass
class ProtocolResult:
    """Signal curve plus fitted parameters of one protocol run."""

    x: np.ndarray
    x_name: str
    signal: np.ndarray
    stderr: np.ndarray
    fits: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if not (self.x.size == self.signal.size == self.stderr.size):
            raise ValueError("x, signal and stderr must have equal length")


# ---------------------------------------------------------------------------
# simulation context


@dataclass
class SimConfig:
    """Bundle of physics inputs plus cached track-derived curves.

    The rf drive amplitude defaults to the value that makes the stationary
    aligned pi-time equal ``pi_time_s`` (the published 7 us); pass
    ``rf_gauss`` to override. ``stationary`` freezes the field at the
    alignment orientation (no rotation, no jitter).
    """

    constants: PhysicalConstants = field(default_factory=PhysicalConstants)
    geometry: FieldGeometry = field(default_factory=FieldGeometry)
    rotation: RotationConfig = field(default_factory=RotationConfig)
    jitter: JitterModel = field(default_factory=JitterModel)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    rf_axis_name: str = "nv_x"
    pi_time_s: float = 7e-6
    track_samples: int = 4096
    intrinsic_t2star_s: float | None = None
    intrinsic_t2_s: float | None = None
    photons_per_shot: float | None = None
    shots: int = 500
    seed: int = 0
    stationary: bool = False

    _track: AdiabaticTrack | None = field(default=None, repr=False, compare=False)
    _f_grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    _m_grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cache_key: tuple | None = field(default=None, repr=False, compare=False)

    def rf_axis(self) -> np.ndarray:
        if self.rf_axis_name == "nv_x":
            return np.array([1.0, 0.0, 0.0])
        if self.rf_axis_name == "rotation":
            return rf_axis_nv_frame(self.geometry)
        raise ValueError(f"unknown rf_axis_name {self.rf_axis_name!r}")

    def track(self) -> AdiabaticTrack:
        # cached curves survive dataclasses.replace on non-physics fields;
        # any change to the inputs below forces a rebuild
        key = (self.constants, self.geometry, self.rotation,
               self.track_samples, self.rf_axis_name)
        if self._track is None or self._cache_key != key:
            self._track = build_track(
                self.geometry, self.rotation, self.constants, self.track_samples
            )
            self._f_grid = transition_frequency(self._track)
            self._m_grid = np.abs(tracked_matrix_element(self._track, self.rf_axis()))
            self._cache_key = key
        return self._track

    def f_of_phi(self, phi) -> np.ndarray:
        """Transition frequency (Hz) at rotation phase (any real, wrapped)."""
        track = self.track()
        return np.interp(np.mod(phi, TWO_PI), track.phi_grid, self._f_grid)

    def coupling_of_phi(self, phi) -> np.ndarray:
        """|eta->zeta drive matrix element| per Gauss (rad/s/G) at phase phi."""
        track = self.track()
        return np.interp(np.mod(phi, TWO_PI), track.phi_grid, self._m_grid)

    def b_rf_gauss(self) -> float:
        """Drive amplitude calibrated to the stationary aligned pi-time."""
        if self.geometry.rf_amplitude_g is not None:
            return self.geometry.rf_amplitude_g
        self.track()
        return float(np.pi / (self.pi_time_s * self._m_grid[0]))

    def rabi_of_phi(self, phi) -> np.ndarray:
        """Post-RWA Rabi rate (rad/s) at rotation phase phi."""
        return self.coupling_of_phi(phi) * self.b_rf_gauss()

    def pulse_duration(self, angle_rad: float, t_start_s: float) -> float:
        """Gate length for a target flip angle, calibrated from the nominal
        augmentation at the pulse start time."""
        phi = 0.0 if self.stationary else TWO_PI * t_start_s / self.rotation.period_s
        return float(angle_rad / self.rabi_of_phi(phi))


# ---------------------------------------------------------------------------
# sequence engine


@dataclass(frozen=True)
class _Pulse:
    start_s: float
    duration_s: float
    phase_rad: float = 0.0
    swept: bool = False

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


def _shot_rng(seed: int, salt: int, shot: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, salt, shot]))


def _alignment_knots(eps: np.ndarray, period_s: float):
    """Piecewise-linear rotation phase knots (times, phases) for one shot.

    eps[0] shifts the first alignment off the nominal clock; alignment m then
    sits at eps[0] + sum of the following drawn periods.
    """
    n = eps.size
    times = np.empty(n + 1)
    times[0] = eps[0] - (period_s + eps[0])  # virtual previous alignment
    times[1] = eps[0]
    times[2:] = eps[0] + np.cumsum(period_s + eps[1:])
    phases = TWO_PI * np.arange(-1, n)
    return times, phases


def _simulate_sequence(
    cfg: SimConfig,
    pulses: list[_Pulse],
    phases: np.ndarray,
    n_shots: int,
    salt: int,
) -> np.ndarray:
    """Per-shot dark-state populations, shape (n_shots, n_phases).

    The state starts as the local bright eigenstate; free intervals advance
    the drive-frame phase by the integral of the detuning, gates are stepped
    with exact piecewise-constant two-level unitaries.
    """
    period = cfg.rotation.period_s
    pulses = sorted(pulses, key=lambda p: p.start_s)
    for a, b in zip(pulses[:-1], pulses[1:]):
        if b.start_s < a.end_s - 1e-12:
            raise ValueError(f"pulses overlap at t = {b.start_s * 1e6:.2f} us")
    t_end = pulses[-1].end_s if pulses else 0.0
    uniform = cfg.stationary or cfg.jitter.sigma_period_s == 0.0

    n_periods = int(np.ceil(t_end / period)) + 2
    knots = []
    if uniform:
        shots_to_run = 1
    else:
        shots_to_run = n_shots
        for k in range(n_shots):
            rng = _shot_rng(cfg.jitter.seed, salt, k)
            eps = cfg.jitter.draw(rng, n_periods)
            knots.append(_alignment_knots(eps, period))

    b_rf = cfg.b_rf_gauss()
    m0 = float(cfg.coupling_of_phi(0.0))
    f_nominal = None if cfg.stationary else cfg.f_of_phi
    f0 = float(cfg.f_of_phi(0.0)) if cfg.stationary else None

    state = np.zeros((phases.size, shots_to_run, 2), dtype=complex)
    state[..., 0] = 1.0
    t_cursor = 0.0

    def phi_actual(t_grid: np.ndarray, shot: int) -> np.ndarray:
        kt, kp = knots[shot]
        return np.interp(t_grid, kt, kp)

    for pulse in pulses:
        # free evolution up to the pulse
        if pulse.start_s > t_cursor + 1e-15 and not uniform:
            n_t = max(2, int(np.ceil((pulse.start_s - t_cursor) / _FREE_DT_S)) + 1)
            tg = np.linspace(t_cursor, pulse.start_s, n_t)
            g_nom = f_nominal(TWO_PI * tg / period)
            dphi = np.empty(shots_to_run)
            for k in range(shots_to_run):
                g_act = cfg.f_of_phi(phi_actual(tg, k))
                dphi[k] = TWO_PI * np.trapezoid(g_act - g_nom, tg)
            state[..., 1] *= np.exp(-1j * dphi)

        # gate
        dur = pulse.duration_s
        if dur > 0:
            dt_gate = _GATE_DT_S if dur <= _LONG_GATE_S else _LONG_GATE_DT_S
            n_steps = max(1, int(np.ceil(dur / dt_gate)))
            dt = dur / n_steps
            t_mid = pulse.start_s + (np.arange(n_steps) + 0.5) * dt
            if cfg.stationary:
                omega = np.full((1, n_steps), m0 * b_rf)
                delta = np.zeros((1, n_steps))
            elif uniform:
                phi_n = TWO_PI * t_mid / period
                omega = cfg.rabi_of_phi(phi_n)[None, :]
                delta = np.zeros((1, n_steps))
            else:
                g_nom = f_nominal(TWO_PI * t_mid / period)
                omega = np.empty((shots_to_run, n_steps))
                delta = np.empty((shots_to_run, n_steps))
                for k in range(shots_to_run):
                    phi_a = phi_actual(t_mid, k)
                    omega[k] = cfg.rabi_of_phi(phi_a)
                    delta[k] = TWO_PI * (cfg.f_of_phi(phi_a) - g_nom)
            chi = phases[:, None] if pulse.swept else pulse.phase_rad
            for j in range(n_steps):
                state = su2_apply(state, omega[:, j], delta[:, j], chi, dt)
        t_cursor = pulse.end_s

    # (n_phases, shots_to_run) -> (shots, phases); a jitter-free run keeps a
    # single row so averaging identical shots cannot perturb the last ulp
    return np.ascontiguousarray(np.abs(state[..., 1]).T ** 2)


def _signals(cfg: SimConfig, p_dark: np.ndarray, salt: int) -> np.ndarray:
    """Contrast-unit signals per shot, with optional photon shot noise."""
    scale = cfg.readout.contrast_max * cfg.readout.polarization_fraction
    sig = scale * p_dark
    if cfg.photons_per_shot:
        if sig.shape[0] == 1 and cfg.shots > 1:
            sig = np.repeat(sig, cfg.shots, axis=0)
        std = 1.0 / math.sqrt(cfg.photons_per_shot)
        n_shots, n_phases = sig.shape
        noise = np.empty_like(sig)
        for k in range(n_shots):
            rng = _shot_rng(cfg.jitter.seed, salt + 1, k)
            noise[k] = rng.normal(0.0, std, n_phases)
        sig = sig + noise
    return sig


def _mean_stderr(signals: np.ndarray):
    mean = signals.mean(axis=0)
    n = signals.shape[0]
    if n > 1:
        stderr = signals.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def _apply_envelope(mean_signal: np.ndarray, tau_s: float, t_coh: float | None):
    """Shrink the phase-dependent part by the intrinsic exponential envelope."""
    if t_coh is None or t_coh <= 0:
        return mean_signal
    env = math.exp(-tau_s / t_coh)
    center = mean_signal.mean()
    return center + (mean_signal - center) * env


# ---------------------------------------------------------------------------
# fitting

def fit_fringe(phases, signal) -> FringeFit:
    """Fit a + b cos(phi - phi0) by linear least squares; b >= 0.

    Requires at least 5 samples spanning a full 2*pi of phase.
    """
    phases = np.asarray(phases, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if phases.size < 5:
        raise ValueError(f"need >= 5 phase samples, got {phases.size}")
    if phases.max() - phases.min() < TWO_PI - 1e-6:
        raise ValueError("phase samples must span at least 2*pi")
    x = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    coef, *_ = np.linalg.lstsq(x, signal, rcond=None)
    resid = signal - x @ coef
    dof = max(phases.size - 3, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(x.T @ x)
    a, bc, bs = coef
    b = math.hypot(bc, bs)
    phi0 = math.atan2(bs, bc)
    if b > 0:
        var_b = (bc * bc * cov[1, 1] + bs * bs * cov[2, 2] + 2 * bc * bs * cov[1, 2]) / (b * b)
        var_p = (bs * bs * cov[1, 1] + bc * bc * cov[2, 2] - 2 * bc * bs * cov[1, 2]) / b**4
    else:
        var_b = cov[1, 1]
        var_p = np.pi**2
    return FringeFit(
        amplitude=FittedValue(b, math.sqrt(max(var_b, 0.0))),
        phase_rad=FittedValue(phi0, math.sqrt(max(var_p, 0.0))),
        offset=FittedValue(float(a), math.sqrt(max(cov[0, 0], 0.0))),
    )


def fit_decay(taus, amplitudes, fix_exponent: float | None = None) -> DecayFit:
    """Fit A0 exp(-(tau/T2)^p) to fringe amplitudes.

    ``fix_exponent`` pins p (1.0 for a plain exponential). When the data show
    no decay within their scatter, T2 is reported as a lower bound (the
    largest tau) with the flag set.
    """
    taus = np.asarray(taus, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    if taus.size < 4:
        raise ValueError(f"need >= 4 decay points, got {taus.size}")
    if np.any(amps < 0):
        raise ValueError("amplitudes must be >= 0")
    if np.all(amps == 0):
        raise ValueError("all amplitudes are zero; nothing to fit")

    a0 = float(np.max(amps))
    spread = float(np.std(amps))
    if amps[np.argmax(taus)] > 0.9 * amps[np.argmin(taus)] or spread < 0.02 * a0:
        return DecayFit(
            t2_s=FittedValue(math.inf, math.nan),
            exponent=FittedValue(fix_exponent if fix_exponent else 1.0, math.nan),
            amplitude0=FittedValue(a0, spread),
            t2_is_lower_bound=True,
        )

    t_scale = float(np.max(taus))
    below = taus[amps < 0.5 * a0]
    t_half = float(below.min()) if below.size else t_scale
    try:
        if fix_exponent is not None:
            def model(t, amp, t2):
                return amp * np.exp(-((t / t2) ** fix_exponent))

            popt, pcov = curve_fit(
                model, taus, amps, p0=[a0, t_half],
                bounds=([0.0, 1e-12], [10 * a0, 1e4 * t_scale]), maxfev=20000,
            )
            amp_f, t2 = popt
            p_val, p_err = fix_exponent, 0.0
            errs = np.sqrt(np.diag(pcov))
            amp_err, t2_err = errs
        else:
            def model(t, amp, t2, p):
                return amp * np.exp(-((t / t2) ** p))

            popt, pcov = curve_fit(
                model, taus, amps, p0=[a0, t_half, 1.0],
                bounds=([0.0, 1e-12, 0.2], [10 * a0, 1e4 * t_scale, 5.0]), maxfev=20000,
            )
            amp_f, t2, p_val = popt
            errs = np.sqrt(np.diag(pcov))
            amp_err, t2_err, p_err = errs
    except RuntimeError as exc:
        raise FitError(f"decay fit did not converge: {exc}") from exc
    return DecayFit(
        t2_s=FittedValue(float(t2), float(t2_err)),
        exponent=FittedValue(float(p_val), float(p_err)),
        amplitude0=FittedValue(float(amp_f), float(amp_err)),
    )


def _fit_rabi_frequency(durations, signal) -> FittedValue:
    """Fit a - b cos(2 pi f t) to a Rabi trace; f from the FFT peak as seed."""
    t = np.asarray(durations, dtype=float)
    y = np.asarray(signal, dtype=float)
    if t.size < 6:
        raise ValueError("need >= 6 durations to fit a Rabi frequency")
    order = np.argsort(t)
    t, y = t[order], y[order]
    dt = np.median(np.diff(t))
    yc = y - y.mean()
    freqs = np.fft.rfftfreq(4 * t.size, dt)
    power = np.abs(np.fft.rfft(yc, 4 * t.size))
    f0 = float(freqs[np.argmax(power[1:]) + 1])
    if f0 <= 0:
        f0 = 1.0 / (t[-1] - t[0])

    def model(tt, a, b, f):
        return a - b * np.cos(TWO_PI * f * tt)

    try:
        popt, pcov = curve_fit(
            model, t, y, p0=[y.mean(), (y.max() - y.min()) / 2, f0],
            bounds=([-1.0, 0.0, 0.2 * f0], [1.0, 1.0, 5.0 * f0]), maxfev=20000,
        )
    except RuntimeError as exc:
        raise FitError(f"Rabi fit did not converge: {exc}") from exc
    return FittedValue(float(popt[2]), float(np.sqrt(pcov[2, 2])))


# ---------------------------------------------------------------------------
# protocols

_SALTS = {"rabi": 1, "ramsey": 2, "spin_echo": 3, "multi_period_echo": 4,
          "spin_lock": 5, "diagnostic": 6}


def _salt(name: str, index: int) -> int:
    return _SALTS[name] * 100000 + index


def rabi(t_delay_s: float, durations_s, cfg: SimConfig) -> ProtocolResult:
    """Gated-drive Rabi oscillations started at a delay into the rotation.

    For each gate duration: prepare the bright state at alignment, wait to
    t_delay, drive with the feedforward carrier for the duration, read out at
    the next alignment. Fits the oscillation frequency of the signal trace.
    """
    durations = np.asarray(durations_s, dtype=float)
    if np.any(durations < 0):
        raise ValueError("durations must be >= 0")
    period = cfg.rotation.period_s
    if not cfg.stationary and t_delay_s + float(durations.max()) > period:
        raise ValueError(
            f"t_delay + max duration = "
            f"{(t_delay_s + durations.max()) * 1e6:.1f} us exceeds the readout "
            f"time (one period = {period * 1e6:.0f} us)"
        )
    mean = np.empty(durations.size)
    stderr = np.empty(durations.size)
    for i, dur in enumerate(durations):
        pulses = [_Pulse(t_delay_s, float(dur))] if dur > 0 else []
        p = _simulate_sequence(cfg, pulses, np.array([0.0]), cfg.shots, _salt("rabi", i))
        sig = _signals(cfg, p, _salt("rabi", i))
        mean[i], stderr[i] = (v[0] for v in _mean_stderr(sig))
    fits = {}
    if durations.size >= 6 and np.ptp(mean) > 0:
        f = _fit_rabi_frequency(durations, mean)
        fits["rabi_frequency_hz"] = f
    return ProtocolResult(
        x=durations, x_name="duration_s", signal=mean, stderr=stderr, fits=fits,
        meta={"protocol": "rabi", "t_delay_s": t_delay_s, "seed": cfg.jitter.seed},
    )


def _fringe_run(cfg, pulses, phases, salt, tau_s, t_coh):
    p = _simulate_sequence(cfg, pulses, phases, cfg.shots, salt)
    sig = _signals(cfg, p, salt)
    mean, stderr = _mean_stderr(sig)
    mean = _apply_envelope(mean, tau_s, t_coh)
    fit = fit_fringe(phases, mean)
    return mean, stderr, fit


def _half_pi_at_center(cfg: SimConfig, center_s: float, angle: float):
    """Pulse start and duration for a target angle centered at center_s.

    The duration is calibrated from the augmentation at the pulse start; one
    fixed-point pass resolves the start/duration circularity.
    """
    d = cfg.pulse_duration(angle, center_s)
    for _ in range(2):
        d = cfg.pulse_duration(angle, center_s - d / 2)
    return center_s - d / 2, d


def ramsey(t_delay_s: float, tau_s: float, cfg: SimConfig,
           phases=DEFAULT_PHASES, _index: int = 0) -> ProtocolResult:
    """Ramsey fringe: pi/2 - tau - pi/2 with the final pulse phase swept.

    tau is measured between pulse centers; pulse durations are calibrated
    from the local augmentation. The whole sequence must fit in one rotation
    period.
    """
    phases = np.asarray(phases, dtype=float)
    d1 = cfg.pulse_duration(np.pi / 2, t_delay_s)
    c1 = t_delay_s + d1 / 2
    start2, d2 = _half_pi_at_center(cfg, c1 + tau_s, np.pi / 2)
    if start2 < t_delay_s + d1 - 1e-12:
        raise ValueError(
            f"tau = {tau_s * 1e6:.2f} us too short: pulses overlap "
            f"(minimum {(d1 + d2) / 2 * 1e6:.2f} us between centers)"
        )
    if not cfg.stationary and start2 + d2 > cfg.rotation.period_s:
        raise ValueError("Ramsey sequence does not fit within one rotation period")
    pulses = [_Pulse(t_delay_s, d1, 0.0), _Pulse(start2, d2, swept=True)]
    mean, stderr, fit = _fringe_run(
        cfg, pulses, phases, _salt("ramsey", _index), tau_s, cfg.intrinsic_t2star_s
    )
    return ProtocolResult(
        x=phases, x_name="phase_rad", signal=mean, stderr=stderr,
        fits={"amplitude": fit.amplitude, "phase_rad": fit.phase_rad,
              "offset": fit.offset},
        meta={"protocol": "ramsey", "t_delay_s": t_delay_s, "tau_s": tau_s,
              "seed": cfg.jitter.seed},
    )


def spin_echo(t_delay_s: float, tau_s: float, cfg: SimConfig,
              phases=DEFAULT_PHASES, _index: int = 0) -> ProtocolResult:
    """Spin echo: pi/2 - tau/2 - pi - tau/2 - pi/2, final phase swept."""
    phases = np.asarray(phases, dtype=float)
    d1 = cfg.pulse_duration(np.pi / 2, t_delay_s)
    c1 = t_delay_s + d1 / 2
    startm, dm = _half_pi_at_center(cfg, c1 + tau_s / 2, np.pi)
    start2, d2 = _half_pi_at_center(cfg, c1 + tau_s, np.pi / 2)
    if startm < t_delay_s + d1 - 1e-12 or start2 < startm + dm - 1e-12:
        raise ValueError(f"tau = {tau_s * 1e6:.2f} us too short: echo pulses overlap")
    if not cfg.stationary and start2 + d2 > cfg.rotation.period_s:
        raise ValueError("spin-echo sequence does not fit within one rotation period")
    pulses = [_Pulse(t_delay_s, d1, 0.0), _Pulse(startm, dm, 0.0),
              _Pulse(start2, d2, swept=True)]
    mean, stderr, fit = _fringe_run(
        cfg, pulses, phases, _salt("spin_echo", _index), tau_s, cfg.intrinsic_t2_s
    )
    return ProtocolResult(
        x=phases, x_name="phase_rad", signal=mean, stderr=stderr,
        fits={"amplitude": fit.amplitude, "phase_rad": fit.phase_rad,
              "offset": fit.offset},
        meta={"protocol": "spin_echo", "t_delay_s": t_delay_s, "tau_s": tau_s,
              "seed": cfg.jitter.seed},
    )


def multi_period_echo(n_periods: int, cfg: SimConfig,
                      phases=DEFAULT_PHASES, _index: int = 0) -> ProtocolResult:
    """Spin echo with tau an even number of whole rotation periods.

    All pulses sit at field-alignment passages (t = 0, n/2 and n periods),
    where the augmentation is maximal and the transition frequency is
    stationary; phase errors accumulated in consecutive periods cancel.
    """
    if n_periods % 2 or n_periods < 2:
        raise ValueError(f"n_periods must be even and >= 2, got {n_periods}")
    phases = np.asarray(phases, dtype=float)
    period = cfg.rotation.period_s
    tau = n_periods * period
    d1 = cfg.pulse_duration(np.pi / 2, 0.0)
    c1 = d1 / 2
    startm, dm = _half_pi_at_center(cfg, c1 + tau / 2, np.pi)
    start2, d2 = _half_pi_at_center(cfg, c1 + tau, np.pi / 2)
    pulses = [_Pulse(0.0, d1, 0.0), _Pulse(startm, dm, 0.0),
              _Pulse(start2, d2, swept=True)]
    mean, stderr, fit = _fringe_run(
        cfg, pulses, phases, _salt("multi_period_echo", _index), tau, cfg.intrinsic_t2_s
    )
    return ProtocolResult(
        x=phases, x_name="phase_rad", signal=mean, stderr=stderr,
        fits={"amplitude": fit.amplitude, "phase_rad": fit.phase_rad,
              "offset": fit.offset},
        meta={"protocol": "multi_period_echo", "n_periods": n_periods,
              "tau_s": tau, "seed": cfg.jitter.seed},
    )


def spin_lock(lock_durations_s, cfg: SimConfig, phases=DEFAULT_PHASES) -> ProtocolResult:
    """Continuous dynamical decoupling: pi/2, then a lock pulse 90 degrees out
    of phase, then a phase-swept pi/2 calibrated at its application time.

    Returns the fitted fringe amplitude per lock duration.
    """
    phases = np.asarray(phases, dtype=float)
    locks = np.asarray(lock_durations_s, dtype=float)
    if np.any(locks < 0):
        raise ValueError("lock durations must be >= 0")
    amps = np.empty(locks.size)
    amp_errs = np.empty(locks.size)
    fringe_phases = np.empty(locks.size)
    d1 = cfg.pulse_duration(np.pi / 2, 0.0)
    for i, lock in enumerate(locks):
        t3 = d1 + lock
        d3 = cfg.pulse_duration(np.pi / 2, t3)
        pulses = [_Pulse(0.0, d1, 0.0)]
        if lock > 0:
            pulses.append(_Pulse(d1, float(lock), np.pi / 2))
        pulses.append(_Pulse(t3, d3, swept=True))
        mean, stderr, fit = _fringe_run(
            cfg, pulses, phases, _salt("spin_lock", i), float(lock), None
        )
        amps[i] = fit.amplitude.value
        amp_errs[i] = fit.amplitude.stderr
        fringe_phases[i] = fit.phase_rad.value
    return ProtocolResult(
        x=locks, x_name="lock_duration_s", signal=amps, stderr=amp_errs,
        extras={"fringe_phase_rad": fringe_phases},
        meta={"protocol": "spin_lock", "seed": cfg.jitter.seed},
    )


def _decay_sweep(protocol, xs, cfg, phases):
    amps = np.empty(len(xs))
    errs = np.empty(len(xs))
    for i, x in enumerate(xs):
        res = protocol(x, cfg, phases, _index=i)
        amps[i] = res.fits["amplitude"].value
        errs[i] = res.fits["amplitude"].stderr
    return amps, errs


def ramsey_decay(t_delay_s: float, taus_s, cfg: SimConfig,
                 phases=DEFAULT_PHASES) -> ProtocolResult:
    """Fringe amplitude vs tau with a fitted exponential dephasing time."""
    taus = np.asarray(taus_s, dtype=float)
    amps, errs = _decay_sweep(
        lambda tau, c, ph, _index: ramsey(t_delay_s, tau, c, ph, _index=_index),
        taus, cfg, phases)
    fit = fit_decay(taus, amps, fix_exponent=1.0)
    return ProtocolResult(
        x=taus, x_name="tau_s", signal=amps, stderr=errs,
        fits={"t2star_s": fit.t2_s, "amplitude0": fit.amplitude0},
        extras={"t2_is_lower_bound": fit.t2_is_lower_bound},
        meta={"protocol": "ramsey_decay", "t_delay_s": t_delay_s,
              "seed": cfg.jitter.seed},
    )


def spin_echo_decay(t_delay_s: float, taus_s, cfg: SimConfig,
                    phases=DEFAULT_PHASES) -> ProtocolResult:
    """Echo fringe amplitude vs tau with a fitted exponential coherence time."""
    taus = np.asarray(taus_s, dtype=float)
    amps, errs = _decay_sweep(
        lambda tau, c, ph, _index: spin_echo(t_delay_s, tau, c, ph, _index=_index),
        taus, cfg, phases)
    fit = fit_decay(taus, amps, fix_exponent=1.0)
    return ProtocolResult(
        x=taus, x_name="tau_s", signal=amps, stderr=errs,
        fits={"t2_s": fit.t2_s, "amplitude0": fit.amplitude0},
        extras={"t2_is_lower_bound": fit.t2_is_lower_bound},
        meta={"protocol": "spin_echo_decay", "t_delay_s": t_delay_s,
              "seed": cfg.jitter.seed},
    )


def multi_period_echo_decay(n_periods_list, cfg: SimConfig,
                            phases=DEFAULT_PHASES) -> ProtocolResult:
    """Multi-period echo amplitude vs tau = n periods, with decay fit."""
    ns = list(n_periods_list)
    taus = np.array([n * cfg.rotation.period_s for n in ns])
    amps = np.empty(len(ns))
    errs = np.empty(len(ns))
    for i, n in enumerate(ns):
        res = multi_period_echo(n, cfg, phases, _index=i)
        amps[i] = res.fits["amplitude"].value
        errs[i] = res.fits["amplitude"].stderr
    fit = fit_decay(taus, amps, fix_exponent=1.0)
    return ProtocolResult(
        x=taus, x_name="tau_s", signal=amps, stderr=errs,
        fits={"t2_s": fit.t2_s, "amplitude0": fit.amplitude0},
        extras={"n_periods": np.array(ns), "t2_is_lower_bound": fit.t2_is_lower_bound},
        meta={"protocol": "multi_period_echo_decay", "seed": cfg.jitter.seed},
    )


_PROTOCOLS = {
    "rabi": lambda cfg, p: rabi(p.get("t_delay_s", 0.0), p["durations_s"], cfg),
    "ramsey": lambda cfg, p: ramsey(p.get("t_delay_s", 0.0), p["tau_s"], cfg,
                                    p.get("phases", DEFAULT_PHASES)),
    "spin_echo": lambda cfg, p: spin_echo(p.get("t_delay_s", 0.0), p["tau_s"], cfg,
                                          p.get("phases", DEFAULT_PHASES)),
    "multi_period_echo": lambda cfg, p: multi_period_echo(
        p["n_periods"], cfg, p.get("phases", DEFAULT_PHASES)),
    "spin_lock": lambda cfg, p: spin_lock(p["lock_durations_s"], cfg,
                                          p.get("phases", DEFAULT_PHASES)),
}


def monte_carlo(protocol: str, params: dict, jitter: JitterModel,
                n_shots: int, cfg: SimConfig) -> ProtocolResult:
    """Run a named protocol under a given jitter model and shot count.

    Each shot owns an independent RNG stream derived from (jitter seed,
    protocol, shot index), so results are reproducible and the first N shots
    of a 2N-shot run reuse the same noise realizations.
    """
    if protocol not in _PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; "
                         f"choose from {sorted(_PROTOCOLS)}")
    if n_shots < 1:
        raise ValueError(f"n_shots must be >= 1, got {n_shots}")
    run_cfg = replace(cfg, jitter=jitter, shots=n_shots)
    return _PROTOCOLS[protocol](run_cfg, dict(params))


def alignment_phase_error(cfg: SimConfig, sigma_period_s: float,
                          n_shots: int = 200,
                          window: tuple[float, float] | None = None) -> float:
    """Mean drive-qubit phase error accumulated across the field-alignment
    region for a given period jitter.

    Each jitter realization is paired with its sign-flipped twin, so
    contributions linear in the timing error cancel exactly and the returned
    mean isolates the quadratically amplified component: the curvature of
    the transition-frequency sweep near alignment turns timing noise into a
    net phase error that grows as sigma squared.
    """
    jitter = replace(cfg.jitter, sigma_period_s=sigma_period_s)
    period = cfg.rotation.period_s
    if window is None:
        window = (0.75 * period, 1.25 * period)
    t0, t1 = window
    n_periods = int(np.ceil(t1 / period)) + 2
    tg = np.linspace(t0, t1, max(64, int((t1 - t0) / _FREE_DT_S)))
    g_nom = cfg.f_of_phi(TWO_PI * tg / period)

    def phase_err(eps):
        kt, kp = _alignment_knots(eps, period)
        g_act = cfg.f_of_phi(np.interp(tg, kt, kp))
        return TWO_PI * np.trapezoid(g_act - g_nom, tg)

    total = 0.0
    for k in range(n_shots):
        rng = _shot_rng(jitter.seed, _salt("diagnostic", 0), k)
        eps = jitter.draw(rng, n_periods)
        total += 0.5 * (phase_err(eps) + phase_err(-eps))
    return abs(total / n_shots)
