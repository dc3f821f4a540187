"""Simulation of NV-hosted nitrogen nuclear spin qubits in a rotating diamond.

The package models the coupled electron-nuclear spin system of an NV center
whose host crystal rotates mechanically in a strong, obliquely applied
magnetic field: the instantaneous 9-level spectrum, adiabatic eigenstate
tracking over a rotation, hyperfine-enhanced rf coupling, phase-continuous
frequency-modulated (feedforward) drive synthesis, and full coherence
protocols (Rabi, Ramsey, spin echo, multi-period echo, spin locking) under
rotation-period jitter.
"""

from rotorspin.spincore import PhysicalConstants, SpinOperators, spin1_operators
from rotorspin.geometry import FieldGeometry, RotationConfig
from rotorspin.spectral import AdiabaticTrack, build_track
from rotorspin.config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "PhysicalConstants",
    "SpinOperators",
    "spin1_operators",
    "FieldGeometry",
    "RotationConfig",
    "AdiabaticTrack",
    "build_track",
    "RunConfig",
    "load_config",
]
