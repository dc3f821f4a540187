"""JSON run configuration: defaults, validation and round-trip serialization.

All keys use ordinary-frequency units (Hz, Hz/G), seconds, Gauss and degrees;
unknown keys are rejected. An empty config object yields the published
defaults (480 G, 1 kHz rotation, 54.7356 deg cone angle, 323 ns period
jitter).
"""

import hashlib
import json
import math
from dataclasses import dataclass, fields

__all__ = ["ConfigError", "RunConfig", "load_config", "default_config"]


class ConfigError(ValueError):
    """Malformed or out-of-range run configuration."""


_MAGIC_ANGLE_DEG = math.degrees(math.acos(1.0 / math.sqrt(3.0)))


@dataclass
class RunConfig:
    """Flat, serializable bundle of every tunable simulation parameter."""

    d_zfs_hz: float = 2.870e9
    gamma_e_hz_per_g: float = -2.8e6
    gamma_n_hz_per_g: float = 307.7
    q_hz: float = -4.9457e6
    a_par_hz: float = -2.162e6
    a_perp_hz: float = -2.62e6

    period_s: float = 1e-3
    phase_origin_s: float = 0.0
    b_gauss: float = 480.0
    cone_angle_deg: float = _MAGIC_ANGLE_DEG
    rf_gauss: float | None = None
    rf_axis: str = "nv_x"
    pi_time_s: float = 7e-6

    track_samples: int = 4096
    profile_samples_per_period: int = 16384
    sample_rate_hz: float = 1e8

    sigma_period_s: float = 323e-9
    jitter_white_fraction: float = 0.2
    jitter_mode: str = "drift+white"

    polarization_fraction: float = 1.0
    contrast_max: float = 0.025
    window_fwhm_s: float = 4e-6

    intrinsic_t2star_s: float | None = None
    intrinsic_t2_s: float | None = None
    photons_per_shot: float | None = None

    shots: int = 500
    seed: int = 0
    stationary: bool = False

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def _validate(cfg: RunConfig) -> RunConfig:
    _require(cfg.d_zfs_hz > 0, f"d_zfs_hz must be positive, got {cfg.d_zfs_hz}")
    for name in ("d_zfs_hz", "gamma_e_hz_per_g", "gamma_n_hz_per_g", "q_hz",
                 "a_par_hz", "a_perp_hz"):
        _require(math.isfinite(getattr(cfg, name)), f"{name} must be finite")
    _require(cfg.period_s > 0, f"period_s must be positive, got {cfg.period_s}")
    _require(cfg.b_gauss >= 0, f"b_gauss must be >= 0, got {cfg.b_gauss}")
    _require(0.0 <= cfg.cone_angle_deg <= 90.0,
             f"cone_angle_deg must be in [0, 90], got {cfg.cone_angle_deg}")
    _require(cfg.rf_gauss is None or cfg.rf_gauss > 0,
             f"rf_gauss must be positive or null, got {cfg.rf_gauss}")
    _require(cfg.rf_axis in ("nv_x", "rotation"),
             f"rf_axis must be 'nv_x' or 'rotation', got {cfg.rf_axis!r}")
    _require(cfg.pi_time_s > 0, f"pi_time_s must be positive, got {cfg.pi_time_s}")
    _require(cfg.track_samples >= 64,
             f"track_samples must be >= 64, got {cfg.track_samples}")
    _require(cfg.profile_samples_per_period >= 1024,
             f"profile_samples_per_period must be >= 1024, "
             f"got {cfg.profile_samples_per_period}")
    _require(cfg.sample_rate_hz > 0,
             f"sample_rate_hz must be positive, got {cfg.sample_rate_hz}")
    _require(cfg.sigma_period_s >= 0,
             f"sigma_period_s must be >= 0, got {cfg.sigma_period_s}")
    _require(0.0 <= cfg.jitter_white_fraction <= 1.0,
             f"jitter_white_fraction must be in [0, 1], got {cfg.jitter_white_fraction}")
    _require(cfg.jitter_mode in ("drift+white", "white", "drift"),
             f"jitter_mode must be one of drift+white/white/drift, "
             f"got {cfg.jitter_mode!r}")
    _require(0.0 <= cfg.polarization_fraction <= 1.0,
             f"polarization_fraction must be in [0, 1], got {cfg.polarization_fraction}")
    _require(0.0 <= cfg.contrast_max <= 1.0,
             f"contrast_max must be in [0, 1], got {cfg.contrast_max}")
    _require(cfg.window_fwhm_s > 0,
             f"window_fwhm_s must be positive, got {cfg.window_fwhm_s}")
    for name in ("intrinsic_t2star_s", "intrinsic_t2_s", "photons_per_shot"):
        v = getattr(cfg, name)
        _require(v is None or v > 0, f"{name} must be positive or null, got {v}")
    _require(cfg.shots >= 1, f"shots must be >= 1, got {cfg.shots}")
    _require(isinstance(cfg.seed, int) and cfg.seed >= 0,
             f"seed must be a non-negative integer, got {cfg.seed}")
    _require(isinstance(cfg.stationary, bool),
             f"stationary must be a boolean, got {cfg.stationary!r}")
    return cfg


_INT_FIELDS = {"track_samples", "profile_samples_per_period", "shots", "seed"}


def config_from_dict(data: dict) -> RunConfig:
    """Validated RunConfig from a parsed JSON object; unknown keys rejected."""
    known = {f.name for f in fields(RunConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key: {key!r}")
    clean = {}
    for key, value in data.items():
        if key in _INT_FIELDS:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
        elif key in ("rf_axis", "jitter_mode"):
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string, got {value!r}")
        elif key == "stationary":
            if not isinstance(value, bool):
                raise ConfigError(f"{key} must be a boolean, got {value!r}")
        elif value is not None:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{key} must be a number, got {value!r}")
            value = float(value)
        clean[key] = value
    return _validate(RunConfig(**clean))


def load_config(path) -> RunConfig:
    """Parse and validate a JSON config file; {} yields all defaults."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return config_from_dict(data)


def default_config() -> RunConfig:
    return _validate(RunConfig())
