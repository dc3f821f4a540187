"""Command-line front end: figure-style reproductions, CSV/JSON emission.

Every subcommand is deterministic given (config, seed): repeated runs write
byte-identical files. CSV floats carry 17 significant digits; `reproduce`
outputs embed the config hash for provenance. Optional --svg renders a
static line plot next to each CSV.
"""

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numpy as np

from rotorspin.config import ConfigError, RunConfig, default_config, load_config
from rotorspin.dynamics import validate_reduction
from rotorspin.feedforward import GateWindow, export_waveform, fm_from_track, synthesize
from rotorspin.geometry import FieldGeometry, RotationConfig, field_nv_angle
from rotorspin.protocols import (
    DEFAULT_PHASES,
    JitterModel,
    ReadoutModel,
    SimConfig,
    multi_period_echo,
    multi_period_echo_decay,
    rabi,
    ramsey,
    ramsey_decay,
    spin_echo,
    spin_echo_decay,
    spin_lock,
)
from rotorspin.spectral import augmentation_factor, bare_projections, transition_frequency
from rotorspin.spincore import BASIS_LABELS, PhysicalConstants
from rotorspin.util import TWO_PI, format_float

__all__ = ["main", "build_sim_config"]

FIGURES = ("fig3a", "fig3c", "fig4c", "fig5", "fig6")


def build_sim_config(rc: RunConfig) -> SimConfig:
    """Assemble the simulation context from a validated run configuration."""
    constants = PhysicalConstants.from_hz(
        d_zfs_hz=rc.d_zfs_hz,
        gamma_e_hz_per_g=rc.gamma_e_hz_per_g,
        gamma_n_hz_per_g=rc.gamma_n_hz_per_g,
        q_hz=rc.q_hz,
        a_par_hz=rc.a_par_hz,
        a_perp_hz=rc.a_perp_hz,
    )
    geometry = FieldGeometry(
        b_magnitude_g=rc.b_gauss,
        cone_angle_rad=np.deg2rad(rc.cone_angle_deg),
        rf_amplitude_g=rc.rf_gauss,
    )
    rotation = RotationConfig(period_s=rc.period_s, phase_origin_s=rc.phase_origin_s)
    jitter = JitterModel(
        sigma_period_s=rc.sigma_period_s,
        seed=rc.seed,
        white_fraction=rc.jitter_white_fraction,
        mode=rc.jitter_mode,
    )
    readout = ReadoutModel(
        polarization_fraction=rc.polarization_fraction,
        contrast_max=rc.contrast_max,
        window_fwhm_s=rc.window_fwhm_s,
    )
    return SimConfig(
        constants=constants,
        geometry=geometry,
        rotation=rotation,
        jitter=jitter,
        readout=readout,
        rf_axis_name=rc.rf_axis,
        pi_time_s=rc.pi_time_s,
        track_samples=rc.track_samples,
        intrinsic_t2star_s=rc.intrinsic_t2star_s,
        intrinsic_t2_s=rc.intrinsic_t2_s,
        photons_per_shot=rc.photons_per_shot,
        shots=rc.shots,
        seed=rc.seed,
        stationary=rc.stationary,
    )


def _write_csv(path: Path, columns: dict, comments: tuple[str, ...] = ()) -> None:
    arrays = {k: np.atleast_1d(np.asarray(v)) for k, v in columns.items()}
    n = max((a.size for a in arrays.values()), default=0)
    with open(path, "w", newline="\n") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(arrays.keys()) + "\n")
        for i in range(n):
            fh.write(",".join(
                format_float(a[i]) if np.issubdtype(a.dtype, np.floating)
                else str(a[i]) for a in arrays.values()
            ))
            fh.write("\n")


def _sanitize(obj):
    """Make the payload strictly valid JSON: non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_sanitize(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _summary(rc: RunConfig, fits: dict | None = None, **extra) -> dict:
    out = {"config": rc.to_dict(), "config_sha256": rc.config_hash(),
           "seed": rc.seed}
    if fits:
        out["fits"] = {
            name: {"value": fv.value, "stderr": fv.stderr}
            for name, fv in fits.items()
        }
    out.update(extra)
    return out


def _maybe_svg(args, path_stem: Path, x, series, xlabel, ylabel, title="", yerr=None):
    if not args.svg:
        return
    from rotorspin.plotting import save_line_svg

    save_line_svg(path_stem.with_suffix(".svg"), x, series, xlabel, ylabel,
                  title=title, yerr=yerr)


def _result_csv_json(args, rc, name, result, x_scale=1.0, x_label=None):
    out = Path(args.out)
    cols = {
        x_label or result.x_name: result.x * x_scale,
        "signal": result.signal,
        "stderr": result.stderr,
    }
    _write_csv(out / f"{name}.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / f"{name}.json", _summary(rc, result.fits, meta=result.meta))
    _maybe_svg(args, out / name, cols[x_label or result.x_name],
               {"signal": result.signal}, x_label or result.x_name, "signal",
               yerr={"signal": result.stderr})


# ---------------------------------------------------------------------------
# subcommand handlers

def _cmd_spectrum(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)  # --points already folded into rc
    track = cfg.track()
    theta = field_nv_angle(track.phi_grid, cfg.geometry)
    alpha = augmentation_factor(track, cfg.rf_axis())
    cols = {"phi_rad": track.phi_grid, "theta_deg": np.rad2deg(theta)}
    for k in range(9):
        cols[f"E_{k + 1}_hz"] = track.energies[:, k] / TWO_PI
    cols["f_transition_hz"] = transition_frequency(track)
    cols["alpha_prime"] = alpha
    out = Path(args.out)
    _write_csv(out / "spectrum.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "spectrum.json", _summary(
        rc,
        aligned_transition_hz=float(cols["f_transition_hz"][0]),
        alpha_prime_aligned=float(alpha[0]),
        alpha_prime_min=float(alpha.min()),
        modulation_peak_to_peak_hz=float(np.ptp(cols["f_transition_hz"])),
    ))
    _maybe_svg(args, out / "spectrum", track.phi_grid,
               {"f_transition_hz": cols["f_transition_hz"]},
               "phi_rad", "frequency (Hz)")
    return 0


def _cmd_projections(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    track = cfg.track()
    proj = bare_projections(track)
    theta = field_nv_angle(track.phi_grid, cfg.geometry)
    cols = {"phi_rad": track.phi_grid, "theta_deg": np.rad2deg(theta)}
    for k, label in enumerate(BASIS_LABELS):
        cols[f"p[{label}]"] = proj[:, k]
    out = Path(args.out)
    _write_csv(out / "projections.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "projections.json", _summary(rc))
    _maybe_svg(args, out / "projections", track.phi_grid,
               {label: proj[:, k] for k, label in enumerate(BASIS_LABELS)
                if proj[:, k].max() > 1e-3},
               "phi_rad", "population")
    return 0


def _cmd_feedforward(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    track = cfg.track()
    profile = fm_from_track(track, cfg.rotation, n_periods=args.periods,
                            samples_per_period=rc.profile_samples_per_period)
    gate = GateWindow(start_s=0.0, duration_s=float(profile.time_s[-1]))
    wave = synthesize(profile, [gate], rc.sample_rate_hz)
    # --out may name the waveform file directly or a directory
    out_path = Path(args.out)
    if out_path.suffix == ".csv":
        out_file = out_path
        out_file.parent.mkdir(parents=True, exist_ok=True)
    else:
        out_file = out_path / "feedforward.csv"
    export_waveform(wave, out_file)
    _write_json(out_file.with_suffix(".json"), _summary(
        rc,
        n_periods=args.periods,
        samples=int(wave.samples.size),
        sample_rate_hz=wave.sample_rate_hz,
        f_min_hz=float(profile.freq_hz.min()),
        f_max_hz=float(profile.freq_hz.max()),
    ))
    if args.svg:
        from rotorspin.plotting import save_line_svg

        save_line_svg(out_file.with_suffix(".svg"), profile.time_s * 1e6,
                      {"f_drive_hz": profile.freq_hz}, "time (us)",
                      "drive frequency (Hz)")
    return 0


def _cmd_rabi(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    if args.durations:
        durations = np.array([float(v) for v in args.durations.split(",")])
    else:
        f_local = cfg.rabi_of_phi(TWO_PI * args.t_delay / rc.period_s) / TWO_PI
        durations = np.linspace(0.0, 1.5 / f_local, 22)
    result = rabi(args.t_delay, durations, cfg)
    _result_csv_json(args, rc, "rabi", result, x_scale=1e6, x_label="duration_us")
    return 0


def _cmd_ramsey(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    result = ramsey(args.t_delay, args.tau, cfg, DEFAULT_PHASES)
    _result_csv_json(args, rc, "ramsey", result, x_label="phase_rad")
    return 0


def _cmd_echo(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    result = spin_echo(args.t_delay, args.tau, cfg, DEFAULT_PHASES)
    _result_csv_json(args, rc, "echo", result, x_label="phase_rad")
    return 0


def _cmd_echo_multiperiod(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    result = multi_period_echo(args.periods, cfg, DEFAULT_PHASES)
    _result_csv_json(args, rc, "echo-multiperiod", result, x_label="phase_rad")
    return 0


def _cmd_spinlock(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    if args.locks:
        locks = np.array([float(v) for v in args.locks.split(",")])
    else:
        locks = np.linspace(0.0, rc.period_s, 9)
    result = spin_lock(locks, cfg, DEFAULT_PHASES)
    _result_csv_json(args, rc, "spinlock", result, x_scale=1e6,
                     x_label="lock_duration_us")
    return 0


def _cmd_validate(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    track = cfg.track()
    profile = fm_from_track(track, cfg.rotation,
                            samples_per_period=rc.profile_samples_per_period)
    b_rf = cfg.b_rf_gauss()
    reports = {}
    for scenario in ("resonant_pi", "free_adiabatic", "detuned"):
        rep = validate_reduction(track, profile, b_rf, cfg.rf_axis(),
                                 scenario=scenario)
        reports[scenario] = {
            "max_population_deviation": rep.max_population_deviation,
            "transfer_full": rep.transfer_full,
            "transfer_reduced": rep.transfer_reduced,
        }
        print(f"{scenario}: max population deviation "
              f"{rep.max_population_deviation:.2e}")
    _write_json(Path(args.out) / "validate.json", _summary(rc, reports=reports))
    return 0


# ---------------------------------------------------------------------------
# figure reproductions

def _reproduce_fig3a(args, rc, cfg):
    track = cfg.track()
    proj = bare_projections(track)
    t_us = track.phi_grid / TWO_PI * rc.period_s * 1e6
    cols = {"phi_rad": track.phi_grid, "time_us": t_us}
    for k, label in enumerate(BASIS_LABELS):
        cols[f"p[{label}]"] = proj[:, k]
    out = Path(args.out)
    _write_csv(out / "fig3a.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "fig3a.json", _summary(rc))
    _maybe_svg(args, out / "fig3a", t_us,
               {label: proj[:, k] for k, label in enumerate(BASIS_LABELS)
                if proj[:, k].max() > 1e-3},
               "time (us)", "population")


def _reproduce_fig3c(args, rc, cfg):
    track = cfg.track()
    f = transition_frequency(track)
    t_us = track.phi_grid / TWO_PI * rc.period_s * 1e6
    cols = {"delay_us": t_us, "f_transition_hz": f}
    out = Path(args.out)
    _write_csv(out / "fig3c.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "fig3c.json", _summary(
        rc, f_aligned_hz=float(f[0]),
        modulation_peak_to_peak_hz=float(np.ptp(f))))
    _maybe_svg(args, out / "fig3c", t_us, {"f_transition_hz": f},
               "delay (us)", "transition frequency (Hz)")


def _reproduce_fig4c(args, rc, cfg):
    # the model comparison is deterministic: drive-calibration physics only.
    # Delays stop at 0.8 T so every gate covers one local Rabi cycle before
    # the single-period readout; beyond that the coupling recovers so fast
    # that no single oscillation frequency describes the trace.
    cfg = replace(cfg, jitter=replace(cfg.jitter, sigma_period_s=0.0), shots=1)
    period = rc.period_s
    delays = np.linspace(0.0, 0.8 * period, 9)
    f_fit = np.empty(delays.size)
    f_err = np.empty(delays.size)
    model = np.empty(delays.size)
    for i, t_d in enumerate(delays):
        f_local = cfg.rabi_of_phi(TWO_PI * t_d / period) / TWO_PI
        dur_max = min(1.0 / float(f_local), period - t_d - 5e-6)
        durations = np.linspace(0.0, dur_max, 16)
        res = rabi(t_d, durations, cfg)
        f_fit[i] = res.fits["rabi_frequency_hz"].value
        f_err[i] = res.fits["rabi_frequency_hz"].stderr
        window = TWO_PI * (t_d + np.linspace(0, durations[-1], 64)) / period
        model[i] = float(np.mean(cfg.rabi_of_phi(window))) / TWO_PI
    ratio = f_fit / f_fit[0]
    model_ratio = model / model[0]
    cols = {"t_delay_us": delays * 1e6, "f_rabi_hz": f_fit,
            "f_rabi_err_hz": f_err, "ratio": ratio, "model_ratio": model_ratio}
    out = Path(args.out)
    _write_csv(out / "fig4c.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "fig4c.json", _summary(
        rc, max_ratio_deviation=float(np.max(np.abs(ratio - model_ratio)))))
    _maybe_svg(args, out / "fig4c", delays * 1e6,
               {"fitted": ratio, "model": model_ratio},
               "t_delay (us)", "Rabi frequency ratio")


def _reproduce_fig5(args, rc, cfg):
    t200 = 200e-6
    sweeps = {
        "ramsey_t0": (ramsey_decay, 0.0,
                      np.array([10, 25, 50, 75, 100, 150, 200, 300, 400, 500]) * 1e-6),
        "ramsey_t200": (ramsey_decay, t200,
                        np.array([25, 50, 100, 150, 200, 300, 400, 500, 600]) * 1e-6),
        "echo_t0": (spin_echo_decay, 0.0,
                    np.array([25, 50, 100, 150, 200, 300, 450, 600, 800]) * 1e-6),
        # pulses mid-rotation run tens of us (low augmentation), so the
        # echo there cannot fit below ~100 us of interrogation time
        "echo_t200": (spin_echo_decay, t200,
                      np.array([100, 150, 200, 300, 450, 600, 700, 760]) * 1e-6),
    }
    rows = {"sequence": [], "t_delay_us": [], "tau_us": [],
            "amplitude": [], "amplitude_err": []}
    fits = {}
    lower_bounds = {}
    series = {}
    for name, (fn, t_d, taus) in sweeps.items():
        res = fn(t_d, taus, cfg)
        rows["sequence"].extend([name] * taus.size)
        rows["t_delay_us"].extend([t_d * 1e6] * taus.size)
        rows["tau_us"].extend((taus * 1e6).tolist())
        rows["amplitude"].extend(res.signal.tolist())
        rows["amplitude_err"].extend(res.stderr.tolist())
        key = "t2star_s" if "ramsey" in name else "t2_s"
        fits[f"{name}_{key}"] = res.fits[key]
        lower_bounds[name] = bool(res.extras.get("t2_is_lower_bound", False))
        series[name] = (taus * 1e6, res.signal)

    mp_cfg = cfg if cfg.intrinsic_t2_s else replace(cfg, intrinsic_t2_s=6.5e-3)
    ns = [2, 4, 6, 8, 10, 12]
    res_mp = multi_period_echo_decay(ns, mp_cfg)
    rows["sequence"].extend(["echo_multiperiod"] * len(ns))
    rows["t_delay_us"].extend([0.0] * len(ns))
    rows["tau_us"].extend((res_mp.x * 1e6).tolist())
    rows["amplitude"].extend(res_mp.signal.tolist())
    rows["amplitude_err"].extend(res_mp.stderr.tolist())
    fits["echo_multiperiod_t2_s"] = res_mp.fits["t2_s"]

    out = Path(args.out)
    cols = {k: np.asarray(v) for k, v in rows.items()}
    _write_csv(out / "fig5.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "fig5.json",
                _summary(rc, fits, t2_is_lower_bound=lower_bounds))
    if args.svg:
        from rotorspin.plotting import save_line_svg

        longest = max(series.values(), key=lambda xy: xy[0].size)[0]
        padded = {}
        for name, (x, y) in series.items():
            padded[name] = np.interp(longest, x, y, left=np.nan, right=np.nan)
        save_line_svg(out / "fig5.svg", longest, padded, "tau (us)",
                      "fringe amplitude")


def _reproduce_fig6(args, rc, cfg):
    locks = np.linspace(0.0, rc.period_s, 9)
    res = spin_lock(locks, cfg)
    cfg0 = replace(cfg, jitter=replace(cfg.jitter, sigma_period_s=0.0), shots=1)
    res0 = spin_lock(locks, cfg0)
    cols = {"lock_duration_us": locks * 1e6, "amplitude": res.signal,
            "amplitude_err": res.stderr, "amplitude_zero_jitter": res0.signal}
    out = Path(args.out)
    _write_csv(out / "fig6.csv", cols, (f"config_sha256={rc.config_hash()}",))
    _write_json(out / "fig6.json", _summary(
        rc,
        full_period_ratio=float(res.signal[-1] / res0.signal[-1]),
    ))
    _maybe_svg(args, out / "fig6", locks * 1e6,
               {"jittered": res.signal, "zero_jitter": res0.signal},
               "lock duration (us)", "fringe amplitude")


def _cmd_reproduce(args, rc: RunConfig) -> int:
    cfg = build_sim_config(rc)
    handler = {
        "fig3a": _reproduce_fig3a,
        "fig3c": _reproduce_fig3c,
        "fig4c": _reproduce_fig4c,
        "fig5": _reproduce_fig5,
        "fig6": _reproduce_fig6,
    }[args.figure]
    handler(args, rc, cfg)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--shots", type=int, help="override Monte Carlo shot count")
    p.add_argument("--points", type=int, help="track samples per rotation")
    p.add_argument("--svg", action="store_true",
                   help="also write a static SVG line plot")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotorspin",
        description="Rotating-diamond nuclear spin qubit simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="tracked spectrum over one rotation")
    _add_common(p)
    p.set_defaults(handler=_cmd_spectrum)

    p = sub.add_parser("projections", help="tracked-state projections onto the aligned basis")
    _add_common(p)
    p.set_defaults(handler=_cmd_projections)

    p = sub.add_parser("feedforward", help="synthesize the FM drive waveform")
    _add_common(p)
    p.add_argument("--periods", type=int, default=1, help="rotation periods to cover")
    p.set_defaults(handler=_cmd_feedforward)

    p = sub.add_parser("rabi", help="gated-drive Rabi trace")
    _add_common(p)
    p.add_argument("--t-delay", type=float, default=0.0, help="gate start time (s)")
    p.add_argument("--durations", help="comma-separated gate durations (s)")
    p.set_defaults(handler=_cmd_rabi)

    p = sub.add_parser("ramsey", help="Ramsey fringe at fixed tau")
    _add_common(p)
    p.add_argument("--t-delay", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=100e-6, help="time between pi/2 centers (s)")
    p.set_defaults(handler=_cmd_ramsey)

    p = sub.add_parser("echo", help="spin-echo fringe at fixed tau")
    _add_common(p)
    p.add_argument("--t-delay", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=200e-6)
    p.set_defaults(handler=_cmd_echo)

    p = sub.add_parser("echo-multiperiod", help="echo over whole rotation periods")
    _add_common(p)
    p.add_argument("--periods", type=int, default=2, help="even number of periods")
    p.set_defaults(handler=_cmd_echo_multiperiod)

    p = sub.add_parser("spinlock", help="spin-lock fringe amplitude vs lock time")
    _add_common(p)
    p.add_argument("--locks", help="comma-separated lock durations (s)")
    p.set_defaults(handler=_cmd_spinlock)

    p = sub.add_parser("validate", help="cross-check reduced vs 9-level propagation")
    _add_common(p)
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("reproduce", help="reproduce a published-figure dataset")
    p.add_argument("figure", choices=FIGURES)
    _add_common(p)
    p.set_defaults(handler=_cmd_reproduce)
    return parser


def _failing_module(exc: BaseException) -> str:
    module = "rotorspin"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("rotorspin"):
            module = name
    return module


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        rc = load_config(args.config) if args.config else default_config()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError(f"seed must be non-negative, got {args.seed}")
            rc = replace(rc, seed=args.seed)
        if getattr(args, "points", None):
            if args.points < 64:
                raise ConfigError(f"--points must be >= 64, got {args.points}")
            rc = replace(rc, track_samples=args.points)
        if args.shots is not None:
            if args.shots < 1:
                raise ConfigError(f"--shots must be >= 1, got {args.shots}")
            rc = replace(rc, shots=args.shots)
        out_path = Path(args.out)
        if out_path.suffix != ".csv":  # feedforward may name the file itself
            out_path.mkdir(parents=True, exist_ok=True)
        return args.handler(args, rc)
    except ConfigError as exc:
        print(f"error in rotorspin.config: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error in {_failing_module(exc)}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
