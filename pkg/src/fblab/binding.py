"""Time-dependent optical binding force between two detuned tweezers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModeParams, PhysicalConfig


@dataclass(frozen=True)
class ForceSample:
    """Axial forces on both particles at time ``t``.

    For the linearized force ``drive1``/``drive2`` hold the motion-independent
    part (already included in ``f1``/``f2``); they are ``None`` otherwise.
    """

    f1: np.ndarray
    f2: np.ndarray
    t: np.ndarray
    drive1: np.ndarray | None = None
    drive2: np.ndarray | None = None

    @property
    def coupling1(self):
        return self.f1 - (0 if self.drive1 is None else self.drive1)

    @property
    def coupling2(self):
        return self.f2 - (0 if self.drive2 is None else self.drive2)


def interference_phase(params, j: int, t):
    """phi_j(t) = kd -/+ (Delta phi + Delta omega t), upper sign for j = 1."""
    if j not in (1, 2):
        raise ValueError("particle index must be 1 or 2")
    kd, dphi, dw = _phase_inputs(params)
    sign = -1.0 if j == 1 else 1.0
    return kd + sign * (dphi + dw * np.asarray(t, dtype=float))


def _phase_inputs(params):
    if isinstance(params, PhysicalConfig):
        return params.kd, params.phase_difference, params.optical_detuning
    return params.kd, params.phase, params.detuning


def full_force(config: PhysicalConfig, z1, z2, t) -> ForceSample:
    """Un-linearized force F_j = F0 sin[phi_j(t) + k'(z_j' - z_j)]."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    kp = config.modified_wavenumber
    f0 = config.binding_prefactor()
    f1 = f0 * np.sin(interference_phase(config, 1, t) + kp * (z2 - z1))
    f2 = f0 * np.sin(interference_phase(config, 2, t) + kp * (z1 - z2))
    return ForceSample(f1, f2, np.asarray(t, dtype=float))


def linearized_force(params: ModeParams, mass: float, z1, z2, t, wavenumber: float) -> ForceSample:
    """First-order expansion of the binding force in the displacements.

    F_j / (m sqrt(O1 O2)) = 2 g [sin(phi_j) / k + cos(phi_j) (z_j' - z_j)].

    ``wavenumber`` is the k dividing the drive term; the coupling term does
    not depend on it.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    scale = 2 * params.g * mass * np.sqrt(params.omega1 * params.omega2)
    phi1 = interference_phase(params, 1, t)
    phi2 = interference_phase(params, 2, t)
    drive1 = scale * np.sin(phi1) / wavenumber
    drive2 = scale * np.sin(phi2) / wavenumber
    f1 = drive1 + scale * np.cos(phi1) * (z2 - z1)
    f2 = drive2 + scale * np.cos(phi2) * (z1 - z2)
    return ForceSample(f1, f2, np.asarray(t, dtype=float), drive1, drive2)


def directional_rates(params, t):
    """(g12, g21): the instantaneous directional coupling rates.

    g12 = g cos(Dw t + Dphi), g21 = g cos(Dw t + Dphi + 2 kd).
    """
    kd, dphi, dw = _phase_inputs(params)
    arg = dw * np.asarray(t, dtype=float) + dphi
    return params.g * np.cos(arg), params.g * np.cos(arg + 2 * kd)
