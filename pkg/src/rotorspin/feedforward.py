"""Phase-continuous frequency-modulated drive synthesis.

The drive frequency follows the rotating transition frequency computed from
the adiabatic track, on the nominal rotation clock. The accumulated phase
phi_acc(t) = 2*pi * integral(f dt') runs continuously through gate-off
intervals (free-running source, digitally gated), so gate phase offsets refer
to one global phase reference.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from rotorspin.geometry import RotationConfig
from rotorspin.spectral import AdiabaticTrack, transition_frequency
from rotorspin.util import TWO_PI, format_float

__all__ = [
    "FMProfile",
    "GateWindow",
    "Waveform",
    "fm_from_track",
    "synthesize",
    "export_waveform",
    "import_waveform",
]


@dataclass(frozen=True)
class FMProfile:
    """Sampled drive profile: instantaneous frequency and accumulated phase.

    ``phase_rad`` is 2*pi times the cumulative trapezoid integral of
    ``freq_hz`` over ``time_s`` with phase 0 at t = 0; it is monotone
    increasing because the transition frequency is strictly positive.
    """

    time_s: np.ndarray
    freq_hz: np.ndarray
    phase_rad: np.ndarray

    def freq_at(self, t) -> np.ndarray:
        return np.interp(t, self.time_s, self.freq_hz)

    def phase_at(self, t) -> np.ndarray:
        return np.interp(t, self.time_s, self.phase_rad)


@dataclass(frozen=True)
class GateWindow:
    """One digital gate: the drive is passed inside [start, start+duration),
    scaled and phase-shifted relative to the global accumulated phase."""

    start_s: float
    duration_s: float
    phase_offset_rad: float = 0.0
    amplitude_scale: float = 1.0

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError(f"gate duration must be >= 0, got {self.duration_s}")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


@dataclass(frozen=True)
class Waveform:
    """Sampled drive amplitudes at a fixed rate, dimensionless in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: float


def fm_from_track(
    track: AdiabaticTrack,
    rot: RotationConfig | None = None,
    n_periods: int = 1,
    samples_per_period: int = 16384,
) -> FMProfile:
    """Feedforward profile following the tracked transition frequency.

    f(t) = f_transition(phi_nominal(t)) over an integer number of nominal
    periods, evaluated through a periodic cubic spline of the track so the
    quadrature of the accumulated phase is smooth. Phase origin of the
    rotation is taken at t = 0.
    """
    if rot is None:
        rot = track.rotation
    if n_periods < 1:
        raise ValueError(f"n_periods must be >= 1, got {n_periods}")
    f_track = transition_frequency(track).copy()
    f_track[-1] = f_track[0]  # periodic endpoint, equal to roundoff anyway
    spline = CubicSpline(track.phi_grid, f_track, bc_type="periodic")
    n = int(n_periods * samples_per_period) + 1
    t = np.linspace(0.0, n_periods * rot.period_s, n)
    phi = np.mod(TWO_PI * t / rot.period_s, TWO_PI)
    f = spline(phi)
    dt = t[1] - t[0]
    phase = np.empty_like(t)
    phase[0] = 0.0
    np.cumsum((f[1:] + f[:-1]) * (0.5 * dt), out=phase[1:])
    phase *= TWO_PI
    return FMProfile(time_s=t, freq_hz=f, phase_rad=phase)


def _check_gates(gates) -> list[GateWindow]:
    gates = sorted(gates, key=lambda g: g.start_s)
    for a, b in zip(gates[:-1], gates[1:]):
        if b.start_s < a.end_s - 1e-15:
            raise ValueError(
                f"gate windows overlap: [{a.start_s}, {a.end_s}) and "
                f"[{b.start_s}, {b.end_s})"
            )
    return gates


def synthesize(profile: FMProfile, gates, sample_rate_hz: float) -> Waveform:
    """Sample the gated sine wave s(t) = A * sin(phi_acc(t) + offset).

    Phase accumulates through gate-off intervals; requires
    sample_rate >= 10x the maximum instantaneous frequency.
    """
    fmax = float(np.max(profile.freq_hz))
    if sample_rate_hz < 10.0 * fmax:
        raise ValueError(
            f"sample_rate_hz = {sample_rate_hz:g} undersamples the profile "
            f"(max frequency {fmax:g} Hz requires >= {10 * fmax:g})"
        )
    gates = _check_gates(gates)
    span = profile.time_s[-1] - profile.time_s[0]
    n = int(round(span * sample_rate_hz))
    t = profile.time_s[0] + np.arange(n) / sample_rate_hz
    out = np.zeros(n)
    for g in gates:
        sel = (t >= g.start_s) & (t < g.end_s)
        if not np.any(sel):
            continue
        out[sel] = g.amplitude_scale * np.sin(
            profile.phase_at(t[sel]) + g.phase_offset_rad
        )
    return Waveform(samples=out, sample_rate_hz=sample_rate_hz)


def export_waveform(waveform: Waveform, path) -> None:
    """Write the waveform as CSV: a sample-rate header comment, then one
    amplitude per line at full round-trip precision."""
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# sample_rate_hz={format_float(waveform.sample_rate_hz)}\n")
            for v in waveform.samples:
                fh.write(format_float(v))
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write waveform to {path}: {exc}") from exc


def import_waveform(path) -> Waveform:
    """Read a waveform file written by export_waveform."""
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if not header.startswith("# sample_rate_hz="):
                raise ValueError(f"{path}: missing sample_rate_hz header")
            rate = float(header.split("=", 1)[1])
            samples = np.array([float(line) for line in fh if line.strip()])
    except OSError as exc:
        raise OSError(f"cannot read waveform from {path}: {exc}") from exc
    return Waveform(samples=samples, sample_rate_hz=rate)
