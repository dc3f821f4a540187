"""Spin-1 operator algebra and the physical constants registry.

All energies and couplings are stored as angular frequencies (rad/s);
gyromagnetic ratios as rad/s per Gauss. Only the CLI and file formats use
ordinary frequencies (Hz). Basis ordering of the 9-dimensional
electron (x) nuclear product space is fixed:

    index = 3*(1 - m_S) + (1 - m_I)

so |m_S=+1, m_I=+1> is index 0 and |m_S=-1, m_I=-1> is index 8.
"""

from dataclasses import dataclass

import numpy as np

from rotorspin.util import TWO_PI

__all__ = [
    "PhysicalConstants",
    "SpinOperators",
    "spin1_operators",
    "embed_electron",
    "embed_nuclear",
    "embed_pair",
    "basis_index",
    "BASIS_LABELS",
]


def basis_index(m_s: int, m_i: int) -> int:
    """Index of the product basis state |m_S, m_I> (both in {+1, 0, -1})."""
    if m_s not in (-1, 0, 1) or m_i not in (-1, 0, 1):
        raise ValueError(f"spin-1 projections must be in {{-1,0,+1}}, got ({m_s}, {m_i})")
    return 3 * (1 - m_s) + (1 - m_i)


BASIS_LABELS = tuple(
    f"mS={ms:+d},mI={mi:+d}" for ms in (1, 0, -1) for mi in (1, 0, -1)
)


@dataclass(frozen=True)
class PhysicalConstants:
    """Ground-state coupling constants of the NV-N14 system, in rad/s.

    Defaults correspond (divided by 2*pi) to D = 2.870 GHz,
    gamma_e = -2.8 MHz/G, gamma_n = +307.7 Hz/G, Q = -4.9457 MHz,
    A_par = -2.162 MHz, A_perp = -2.62 MHz. The nuclear gyromagnetic
    ratio uses the more precise 307.7 Hz/G value; the rounded 307 Hz/G
    is accepted via configuration and differs below all test tolerances.
    """

    d_zfs: float = TWO_PI * 2.870e9
    gamma_e: float = TWO_PI * -2.8e6
    gamma_n: float = TWO_PI * 307.7
    quadrupole_q: float = TWO_PI * -4.9457e6
    a_par: float = TWO_PI * -2.162e6
    a_perp: float = TWO_PI * -2.62e6

    def __post_init__(self):
        vals = (self.d_zfs, self.gamma_e, self.gamma_n,
                self.quadrupole_q, self.a_par, self.a_perp)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("all physical constants must be finite")
        if self.d_zfs <= 0:
            raise ValueError(f"d_zfs must be positive, got {self.d_zfs}")

    @classmethod
    def from_hz(cls, d_zfs_hz=2.870e9, gamma_e_hz_per_g=-2.8e6,
                gamma_n_hz_per_g=307.7, q_hz=-4.9457e6,
                a_par_hz=-2.162e6, a_perp_hz=-2.62e6) -> "PhysicalConstants":
        """Build from ordinary-frequency values (Hz, Hz/G) as used in config files."""
        return cls(
            d_zfs=TWO_PI * d_zfs_hz,
            gamma_e=TWO_PI * gamma_e_hz_per_g,
            gamma_n=TWO_PI * gamma_n_hz_per_g,
            quadrupole_q=TWO_PI * q_hz,
            a_par=TWO_PI * a_par_hz,
            a_perp=TWO_PI * a_perp_hz,
        )


@dataclass(frozen=True)
class SpinOperators:
    """The three spin-1 component matrices in the {+1, 0, -1} basis plus identity."""

    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    identity3: np.ndarray


def spin1_operators() -> SpinOperators:
    """Standard dimensionless spin-1 matrices (hbar = 1), basis {+1, 0, -1}."""
    s = 1.0 / np.sqrt(2.0)
    sx = np.array([[0, s, 0], [s, 0, s], [0, s, 0]], dtype=complex)
    sy = np.array([[0, -1j * s, 0], [1j * s, 0, -1j * s], [0, 1j * s, 0]], dtype=complex)
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return SpinOperators(sx=sx, sy=sy, sz=sz, identity3=np.eye(3, dtype=complex))


def _check3(op: np.ndarray, name: str) -> np.ndarray:
    op = np.asarray(op, dtype=complex)
    if op.shape != (3, 3):
        raise ValueError(f"{name} must be 3x3, got shape {op.shape}")
    return op


def embed_electron(op: np.ndarray) -> np.ndarray:
    """Embed a single-spin operator on the electron factor: op (x) 1."""
    return np.kron(_check3(op, "op"), np.eye(3, dtype=complex))


def embed_nuclear(op: np.ndarray) -> np.ndarray:
    """Embed a single-spin operator on the nuclear factor: 1 (x) op."""
    return np.kron(np.eye(3, dtype=complex), _check3(op, "op"))


def embed_pair(op_s: np.ndarray, op_i: np.ndarray) -> np.ndarray:
    """Tensor product op_S (x) op_I in the fixed basis ordering."""
    return np.kron(_check3(op_s, "op_s"), _check3(op_i, "op_i"))
