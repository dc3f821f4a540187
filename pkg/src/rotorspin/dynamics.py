"""Time-domain propagation.

Two propagators cover complementary regimes:

* ``full_propagate`` steps the full 9-level state with the exact
  piecewise-constant unitary exp(-i H(t + dt/2) dt), built by
  eigendecomposition of the midpoint Hamiltonian. The step must resolve the
  largest energy in H (dt ~ 1 ps), so segments are capped at 100 us; it is
  the validation oracle, not the workhorse.

* ``two_level_propagate`` evolves the reduced qubit (the eta/zeta pair of
  tracked eigenstates) in the frame rotating with the drive phase, under the
  RWA Hamiltonian

      H2(t) = [[0, (W/2) e^{-i chi}], [(W/2) e^{+i chi}, Delta]]

  with W the post-RWA Rabi rate (pi-pulse time = pi/W), Delta the drive
  detuning and chi the gate phase offset. Counter-rotating corrections are
  neglected (W/omega ~ 0.014 here); geometric-phase contributions are not
  modeled.

``adiabatic_evolve`` composes the 9-level evolution over arbitrarily many
rotation periods in the tracked eigenframe (exact interval phases plus
sudden basis updates on the track grid); it is cross-checked against
``full_propagate`` on short segments and used where the full stepper would
be prohibitively expensive.
"""

from dataclasses import dataclass

import numpy as np

from rotorspin.feedforward import FMProfile, GateWindow
from rotorspin.geometry import (
    FieldGeometry,
    RotationConfig,
    rf_axis_nv_frame,
    rotation_phase,
    static_field_nv_frame,
)
from rotorspin.spectral import (
    AdiabaticTrack,
    hamiltonian_stack,
    rf_operator,
    tracked_matrix_element,
    transition_frequency,
)
from rotorspin.spincore import PhysicalConstants
from rotorspin.util import TWO_PI

__all__ = [
    "SegmentTooLongError",
    "DriveTone",
    "FieldSchedule",
    "TwoLevelSchedule",
    "ReductionReport",
    "full_propagate",
    "reduce_to_two_level",
    "two_level_propagate",
    "adiabatic_evolve",
    "project_tracked",
    "validate_reduction",
]

MAX_SEGMENT_S = 100e-6
_CHUNK = 32768


class SegmentTooLongError(ValueError):
    """Requested full-propagator segment exceeds the cost guard."""


@dataclass(frozen=True)
class DriveTone:
    """One rf drive: amplitude in Gauss, phase profile, axis, optional gates.

    ``gates`` of None means the drive is on for the whole segment.
    """

    b_rf_gauss: float
    profile: FMProfile
    axis: np.ndarray
    phase_offset_rad: float = 0.0
    gates: tuple[GateWindow, ...] | None = None


@dataclass(frozen=True)
class FieldSchedule:
    """Time-dependent field seen by the spins: rotating static field plus rf."""

    geometry: FieldGeometry
    rotation: RotationConfig
    constants: PhysicalConstants
    drive: DriveTone | None = None


def _drive_amplitude(drive: DriveTone, t: np.ndarray) -> np.ndarray:
    """Instantaneous rf field (Gauss) at times t."""
    amp = drive.b_rf_gauss * np.sin(drive.profile.phase_at(t) + drive.phase_offset_rad)
    if drive.gates is not None:
        on = np.zeros(t.shape, dtype=bool)
        for g in drive.gates:
            on |= (t >= g.start_s) & (t < g.end_s)
        amp = np.where(on, amp, 0.0)
    return amp


def _energy_center_and_scale(schedule: FieldSchedule, t: float) -> tuple[float, float]:
    """Spectral center of H at time t and the energy scale about it.

    A global shift H -> H - c*1 changes only an overall phase, so the scale
    that limits the step size is the spectral half-range, not the raw
    largest eigenvalue.
    """
    b = static_field_nv_frame(rotation_phase(t, schedule.rotation), schedule.geometry)
    ev = np.linalg.eigvalsh(hamiltonian_stack(b[None, :], schedule.constants)[0])
    center = 0.5 * float(ev[0] + ev[-1])
    scale = 0.5 * float(ev[-1] - ev[0])
    if schedule.drive is not None:
        c = schedule.constants
        scale += abs(schedule.drive.b_rf_gauss) * (abs(c.gamma_e) + abs(c.gamma_n))
    return center, scale


def full_propagate(
    state: np.ndarray,
    schedule: FieldSchedule,
    t_start_s: float,
    t_end_s: float,
    dt_s: float | None = None,
    checkpoints: bool = False,
):
    """Propagate a 9-level state with midpoint-exponential steps.

    Each step applies exp(-i H(t + dt/2) dt) computed by eigendecomposition,
    so every step is unitary to machine precision. ``dt_s`` defaults to the
    largest allowed value 0.02 / E_max with E_max the spectral radius of H at
    the segment start; larger values are rejected. Segments longer than
    100 us are refused: use the reduced two-level propagator for protocol
    timescales.

    With ``checkpoints=True`` returns ``(state, times, states)`` where the
    states are sampled at internal chunk boundaries.
    """
    state = np.asarray(state, dtype=complex)
    if state.shape != (9,):
        raise ValueError(f"state must have shape (9,), got {state.shape}")
    span = t_end_s - t_start_s
    if span < 0:
        raise ValueError("t_end_s must be >= t_start_s")
    if span > MAX_SEGMENT_S:
        raise SegmentTooLongError(
            f"segment of {span * 1e6:.1f} us exceeds the {MAX_SEGMENT_S * 1e6:.0f} us "
            "full-propagator cost guard; use the reduced two-level propagator"
        )
    center, scale = _energy_center_and_scale(schedule, t_start_s)
    dt_max = 0.02 / scale
    if dt_s is None:
        dt_s = dt_max
    elif dt_s > dt_max * (1 + 1e-12):
        raise ValueError(
            f"dt_s = {dt_s:.3e} does not resolve the maximum energy scale "
            f"(require <= {dt_max:.3e} s)"
        )
    n_steps = max(1, int(np.ceil(span / dt_s)))
    dt = span / n_steps

    times = [t_start_s]
    states = [state.copy()]
    shift = center * np.eye(9)
    h0_parts = None  # built per chunk
    for lo in range(0, n_steps, _CHUNK):
        hi = min(lo + _CHUNK, n_steps)
        t_mid = t_start_s + (np.arange(lo, hi) + 0.5) * dt
        b = static_field_nv_frame(rotation_phase(t_mid, schedule.rotation), schedule.geometry)
        h = hamiltonian_stack(b, schedule.constants)
        h -= shift
        if schedule.drive is not None:
            if h0_parts is None:
                h0_parts = rf_operator(schedule.drive.axis, schedule.constants)
            h += _drive_amplitude(schedule.drive, t_mid)[:, None, None] * h0_parts
        evals, evecs = np.linalg.eigh(h)
        u = np.matmul(evecs * np.exp(-1j * evals * dt)[:, None, :],
                      evecs.conj().swapaxes(1, 2))
        # the global phase from the spectral shift keeps the step exact
        state = np.exp(-1j * center * dt * (hi - lo)) * (_tree_product(u) @ state)
        times.append(t_start_s + hi * dt)
        states.append(state.copy())
    if checkpoints:
        return state, np.array(times), np.array(states)
    return state


def _tree_product(u: np.ndarray) -> np.ndarray:
    """Ordered product u[n-1] @ ... @ u[1] @ u[0] by pairwise reduction."""
    while u.shape[0] > 1:
        if u.shape[0] % 2:
            tail = u[-1]
            u = np.matmul(u[1:-1:2], u[:-1:2])
            u[-1] = tail @ u[-1]
        else:
            u = np.matmul(u[1::2], u[::2])
    return u[0]


@dataclass(frozen=True)
class TwoLevelSchedule:
    """Reduced qubit description sampled on a time grid.

    ``gap_rad_s`` is the tracked eta-zeta splitting omega(t); ``rabi_rad_s``
    the post-RWA drive rate W(t) (zero where the drive is gated off);
    ``drive_phase_rad`` the accumulated drive phase; ``detuning_rad_s``
    Delta(t) = omega(t) - d(drive phase)/dt; ``phase_offset_rad`` the
    gate-level phase offset chi(t).
    """

    time_s: np.ndarray
    gap_rad_s: np.ndarray
    rabi_rad_s: np.ndarray
    drive_phase_rad: np.ndarray
    detuning_rad_s: np.ndarray
    phase_offset_rad: np.ndarray

    def __post_init__(self):
        n = self.time_s.size
        for name in ("gap_rad_s", "rabi_rad_s", "drive_phase_rad",
                     "detuning_rad_s", "phase_offset_rad"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} length does not match time grid")


def reduce_to_two_level(
    track: AdiabaticTrack,
    profile: FMProfile,
    b_rf_gauss: float,
    rf_axis=None,
    gates: tuple[GateWindow, ...] | None = None,
) -> TwoLevelSchedule:
    """Project the driven system onto the tracked eta/zeta pair.

    The gap follows the track on the nominal rotation clock of the profile;
    the post-RWA Rabi rate is |<zeta|H_rf|eta>| * B_rf (pi-time = pi / W);
    leakage to the other seven levels is neglected. Gates, when given, zero
    the Rabi rate outside their windows and set the phase offset inside.
    """
    rot = track.rotation
    if rf_axis is None:
        rf_axis = rf_axis_nv_frame(track.geometry)
    t = profile.time_s
    phi = np.mod(rotation_phase(t, rot), TWO_PI)
    gap = TWO_PI * np.interp(phi, track.phi_grid, transition_frequency(track))
    element = np.abs(tracked_matrix_element(track, rf_axis))
    rabi = b_rf_gauss * np.interp(phi, track.phi_grid, element)
    chi = np.zeros_like(t)
    if gates is not None:
        on = np.zeros(t.shape, dtype=bool)
        for g in gates:
            sel = (t >= g.start_s) & (t < g.end_s)
            on |= sel
            chi[sel] = g.phase_offset_rad
        rabi = np.where(on, rabi, 0.0)
    detuning = gap - TWO_PI * profile.freq_hz
    return TwoLevelSchedule(
        time_s=t,
        gap_rad_s=gap,
        rabi_rad_s=rabi,
        drive_phase_rad=profile.phase_rad,
        detuning_rad_s=detuning,
        phase_offset_rad=chi,
    )


def su2_apply(states, rabi, detuning, chi, dt):
    """Apply exp(-i H2 dt) for H2 = [[0, (W/2)e^{-i chi}], [(W/2)e^{i chi}, D]].

    Broadcasts over arbitrary leading shapes of the inputs; ``states`` has
    shape (..., 2). Exact for constant coefficients over the step.
    """
    half_w = 0.5 * np.asarray(rabi)
    half_d = 0.5 * np.asarray(detuning)
    nmag = np.hypot(half_w, half_d)
    theta = nmag * dt
    sinc = np.where(nmag > 0, np.sin(theta) / np.where(nmag > 0, nmag, 1.0), dt)
    cos_t = np.cos(theta)
    phase = np.exp(-1j * half_d * dt)
    e_m = np.exp(-1j * np.asarray(chi))
    u00 = phase * (cos_t + 1j * half_d * sinc)
    u11 = phase * (cos_t - 1j * half_d * sinc)
    u01 = phase * (-1j * half_w * sinc) * e_m
    u10 = phase * (-1j * half_w * sinc) * np.conj(e_m)
    c0 = states[..., 0]
    c1 = states[..., 1]
    return np.stack([u00 * c0 + u01 * c1, u10 * c0 + u11 * c1], axis=-1)


def two_level_propagate(
    state: np.ndarray,
    schedule: TwoLevelSchedule,
    dt_s: float,
) -> np.ndarray:
    """Step a (c_eta, c_zeta) amplitude pair through the schedule.

    Coefficients are sampled at step midpoints by linear interpolation of the
    schedule; dt must resolve the fastest of Rabi rate and detuning by at
    least 50 steps per cycle.
    """
    state = np.asarray(state, dtype=complex)
    if state.shape != (2,):
        raise ValueError(f"state must have shape (2,), got {state.shape}")
    fastest = max(float(np.max(schedule.rabi_rad_s)),
                  float(np.max(np.abs(schedule.detuning_rad_s))))
    if fastest > 0 and dt_s > TWO_PI / (50.0 * fastest):
        raise ValueError(
            f"dt_s = {dt_s:.3e} violates the 50-steps-per-cycle rule "
            f"(require <= {TWO_PI / (50.0 * fastest):.3e} s)"
        )
    t0, t1 = schedule.time_s[0], schedule.time_s[-1]
    n_steps = max(1, int(np.ceil((t1 - t0) / dt_s)))
    dt = (t1 - t0) / n_steps
    t_mid = t0 + (np.arange(n_steps) + 0.5) * dt
    rabi = np.interp(t_mid, schedule.time_s, schedule.rabi_rad_s)
    det = np.interp(t_mid, schedule.time_s, schedule.detuning_rad_s)
    chi = np.interp(t_mid, schedule.time_s, schedule.phase_offset_rad)
    for j in range(n_steps):
        state = su2_apply(state, rabi[j], det[j], chi[j], dt)
    return state


def adiabatic_evolve(track: AdiabaticTrack, amplitudes: np.ndarray, n_periods: int = 1):
    """Evolve tracked-basis amplitudes across whole rotation periods.

    Within each track grid interval the state evolves with the exact
    dynamical phases of the frozen eigenbasis; at interval boundaries the
    basis is updated suddenly (overlap matrix between consecutive sample
    bases). Nonadiabatic mixing enters through the off-diagonal overlaps, so
    adiabaticity is a result, not an assumption.
    """
    c = np.asarray(amplitudes, dtype=complex).copy()
    if c.shape != (9,):
        raise ValueError(f"amplitudes must have shape (9,), got {c.shape}")
    n = track.n_samples
    dt = track.rotation.period_s / (n - 1)
    # interval phases: exp(-i * avg(E) * dt) per label
    phases = np.exp(-0.5j * (track.energies[:-1] + track.energies[1:]) * dt)
    overlaps = np.einsum("nik,nij->nkj", track.vectors[1:].conj(), track.vectors[:-1])
    for _ in range(n_periods):
        for j in range(n - 1):
            c = overlaps[j] @ (phases[j] * c)
    return c


def project_tracked(track: AdiabaticTrack, phi: float, state: np.ndarray) -> np.ndarray:
    """Populations of a 9-level state in the tracked basis nearest to phi."""
    j = int(np.argmin(np.abs(track.phi_grid - np.mod(phi, TWO_PI))))
    amps = track.vectors[j].conj().T @ np.asarray(state, dtype=complex)
    return np.abs(amps) ** 2


@dataclass(frozen=True)
class ReductionReport:
    """Cross-check of the reduced propagator against the 9-level oracle."""

    scenario: str
    max_population_deviation: float
    transfer_full: float
    transfer_reduced: float


def _constant_profile(freq_hz: float, t_end_s: float, n: int = 4097) -> FMProfile:
    t = np.linspace(0.0, t_end_s, n)
    f = np.full_like(t, freq_hz)
    return FMProfile(time_s=t, freq_hz=f, phase_rad=TWO_PI * freq_hz * t)


def validate_reduction(
    track: AdiabaticTrack,
    profile: FMProfile,
    b_rf_gauss: float,
    rf_axis,
    scenario: str = "resonant_pi",
    segment_s: float | None = None,
) -> ReductionReport:
    """Run the full and reduced propagators on one drive segment and report
    the largest population disagreement on the eta/zeta pair.

    Scenarios: ``resonant_pi`` (feedforward drive from t = 0 for one pi
    time), ``free_adiabatic`` (no drive), ``detuned`` (fixed-frequency drive
    detuned by 10x the Rabi rate). All start at the aligned field with the
    nominal rotation running.
    """
    geom, rot, c = track.geometry, track.rotation, track.constants
    rf_axis = np.asarray(rf_axis, dtype=float)
    element0 = abs(tracked_matrix_element(track, rf_axis)[0])
    rabi0 = element0 * b_rf_gauss
    f0 = transition_frequency(track)[0]

    if scenario == "resonant_pi":
        seg = np.pi / rabi0 if segment_s is None else segment_s
        gates = (GateWindow(start_s=0.0, duration_s=seg),)
        drive_profile = profile
    elif scenario == "free_adiabatic":
        seg = 5e-6 if segment_s is None else segment_s
        gates = None
        drive_profile = None
    elif scenario == "detuned":
        seg = np.pi / rabi0 if segment_s is None else segment_s
        f_det = f0 + 10.0 * rabi0 / TWO_PI
        drive_profile = _constant_profile(f_det, seg * 1.01)
        gates = (GateWindow(start_s=0.0, duration_s=seg),)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")

    drive = None
    if drive_profile is not None:
        drive = DriveTone(
            b_rf_gauss=b_rf_gauss, profile=drive_profile, axis=rf_axis, gates=gates
        )
    schedule = FieldSchedule(geometry=geom, rotation=rot, constants=c, drive=drive)

    eta0 = track.vectors[0][:, track.eta_label]
    _, times, states = full_propagate(eta0, schedule, 0.0, seg, checkpoints=True)
    phi_t = rotation_phase(times, rot)
    pops_full = np.array(
        [project_tracked(track, p, s) for p, s in zip(phi_t, states)]
    )
    p_full = pops_full[:, [track.eta_label, track.zeta_label]]

    # reduced side on the same checkpoints
    if drive_profile is None:
        # no drive: populations frozen in the adiabatic frame
        p_red = np.tile([1.0, 0.0], (len(times), 1))
    else:
        reduced = reduce_to_two_level(track, drive_profile, b_rf_gauss, rf_axis, gates=gates)
        dt = min(2e-9, TWO_PI / (200.0 * max(rabi0, 1.0)))
        p_red = np.empty((len(times), 2))
        state2 = np.array([1.0 + 0j, 0.0j])
        p_red[0] = [1.0, 0.0]
        for i in range(1, len(times)):
            sub = _slice_schedule(reduced, times[i - 1], times[i])
            state2 = two_level_propagate(state2, sub, dt)
            p_red[i] = np.abs(state2) ** 2
    dev = float(np.max(np.abs(p_full - p_red)))
    return ReductionReport(
        scenario=scenario,
        max_population_deviation=dev,
        transfer_full=float(p_full[-1, 1]),
        transfer_reduced=float(p_red[-1, 1]),
    )


def _slice_schedule(s: TwoLevelSchedule, t0: float, t1: float) -> TwoLevelSchedule:
    """Restrict a schedule to [t0, t1], interpolating the endpoints."""
    inner = (s.time_s > t0) & (s.time_s < t1)
    t = np.concatenate([[t0], s.time_s[inner], [t1]])

    def cut(arr):
        return np.concatenate([
            [np.interp(t0, s.time_s, arr)], arr[inner], [np.interp(t1, s.time_s, arr)]
        ])

    return TwoLevelSchedule(
        time_s=t,
        gap_rad_s=cut(s.gap_rad_s),
        rabi_rad_s=cut(s.rabi_rad_s),
        drive_phase_rad=cut(s.drive_phase_rad),
        detuning_rad_s=cut(s.detuning_rad_s),
        phase_offset_rad=cut(s.phase_offset_rad),
    )
