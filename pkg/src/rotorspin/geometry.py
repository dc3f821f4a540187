"""Kinematics of the rotating diamond in the NV body frame.

The rotation axis is fixed in the body frame at polar angle ``cone_angle_rad``
(alpha) from the NV z-axis; a (100)-cut crystal gives alpha = arccos(1/sqrt(3))
~ 54.7356 deg. The static field lies on a cone of half-angle alpha about the
rotation axis, parametrized by the rotation phase phi, and is parallel to the
NV axis at phi = 0. The rf coil field is parallel to the rotation axis, which
is invariant under the rotation and therefore time independent in the body
frame.

The sweep starts in the x-z plane (azimuth convention); the spectrum depends
only on the field polar angle, so this choice affects eigenvector phases only.
"""

from dataclasses import dataclass

import numpy as np

from rotorspin.util import TWO_PI

__all__ = [
    "MAGIC_ANGLE_RAD",
    "RotationConfig",
    "FieldGeometry",
    "rotation_phase",
    "static_field_nv_frame",
    "field_nv_angle",
    "rf_axis_nv_frame",
]

MAGIC_ANGLE_RAD = float(np.arccos(1.0 / np.sqrt(3.0)))


@dataclass(frozen=True)
class RotationConfig:
    """Nominal mechanical rotation: period and the time at which B || NV axis."""

    period_s: float = 1e-3
    phase_origin_s: float = 0.0

    def __post_init__(self):
        if not (self.period_s > 0):
            raise ValueError(f"period_s must be positive, got {self.period_s}")


@dataclass(frozen=True)
class FieldGeometry:
    """Static field magnitude, cone (tilt) angle, and rf drive amplitude.

    ``rf_amplitude_g`` of ``None`` means "calibrate from the stationary
    pi-time" (see the dynamics module); the rf axis is the rotation axis.
    """

    b_magnitude_g: float = 480.0
    cone_angle_rad: float = MAGIC_ANGLE_RAD
    rf_amplitude_g: float | None = None

    def __post_init__(self):
        if not (self.b_magnitude_g >= 0):
            raise ValueError(f"b_magnitude_g must be >= 0, got {self.b_magnitude_g}")
        if not (0.0 <= self.cone_angle_rad <= np.pi / 2):
            raise ValueError(
                f"cone_angle_rad must be in [0, pi/2], got {self.cone_angle_rad}"
            )


def rotation_phase(t, rot: RotationConfig):
    """Unwrapped rotation phase phi = 2*pi*(t - phase_origin)/period."""
    return TWO_PI * (np.asarray(t, dtype=float) - rot.phase_origin_s) / rot.period_s


def static_field_nv_frame(phi, geom: FieldGeometry) -> np.ndarray:
    """Static field vector (Gauss) in the NV body frame at rotation phase phi.

    The NV z-axis direction is rotated about the cone axis
    n = (sin a, 0, cos a) by phi (Rodrigues formula), preserving magnitude.
    Accepts scalar or array phi; returns shape (..., 3).
    """
    phi = np.asarray(phi, dtype=float)
    a = geom.cone_angle_rad
    sa, ca = np.sin(a), np.cos(a)
    c, s = np.cos(phi), np.sin(phi)
    # b_hat = z*cos(phi) + (n x z)*sin(phi) + n*(n.z)*(1 - cos(phi)), n x z = (0, sa, 0)
    bx = sa * ca * (1.0 - c)
    by = sa * s
    bz = c + ca * ca * (1.0 - c)
    return geom.b_magnitude_g * np.stack(
        np.broadcast_arrays(bx, by, bz), axis=-1
    )


def field_nv_angle(phi, geom: FieldGeometry):
    """Angle between the static field and the NV axis at rotation phase phi.

    theta(phi) = arccos(cos^2 a + sin^2 a * cos phi); continuous, even in phi,
    with maximum 2a at phi = pi.
    """
    phi = np.asarray(phi, dtype=float)
    a = geom.cone_angle_rad
    c = np.cos(a) ** 2 + np.sin(a) ** 2 * np.cos(phi)
    return np.arccos(np.clip(c, -1.0, 1.0))


def rf_axis_nv_frame(geom: FieldGeometry) -> np.ndarray:
    """Unit vector of the rf coil field in the body frame: the rotation axis."""
    a = geom.cone_angle_rad
    return np.array([np.sin(a), 0.0, np.cos(a)])
