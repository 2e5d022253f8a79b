"""Complex-amplitude series and the rotating frames of each resonance branch.

Lab reference: ``u(t)`` is the analytic signal of a displacement in units
of ``2 z_zpf``, so a free oscillation at Omega has ``u ~ e^{+i Omega t}``.
A series stores

    values = e^{i rotation t} * (conj(u) if conjugated else u) * e^{-i phase_correction},

which the frame fields fully invert (:meth:`ComplexAmplitudeSeries.to_lab`).
The slowly varying amplitude of the model is ``a_j = e^{i Omega_j t} conj(u_j)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .model import ModeParams, ResonanceBranch


@dataclass(frozen=True)
class ComplexAmplitudeSeries:
    """Complex samples on a uniform grid, last axis is time.

    Attributes
    ----------
    values : complex array (..., n)
    dt : sample spacing (s)
    t0 : time of the first sample (s), absolute
    rotation : accumulated demodulation angular frequency (rad/s)
    conjugated : whether the lab signal was conjugated
    phase_correction : constant phase removed from the values (rad)
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0
    rotation: float = 0.0
    conjugated: bool = False
    phase_correction: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    def with_values(self, values, **changes) -> "ComplexAmplitudeSeries":
        return dataclasses.replace(self, values=values, **changes)

    def rotate(self, omega: float) -> "ComplexAmplitudeSeries":
        """Multiply by e^{i omega t} (absolute time)."""
        if omega == 0:
            return self
        return self.with_values(self.values * np.exp(1j * omega * self.times),
                                rotation=self.rotation + omega)

    def conj(self) -> "ComplexAmplitudeSeries":
        return self.with_values(np.conj(self.values), rotation=-self.rotation,
                                conjugated=not self.conjugated,
                                phase_correction=-self.phase_correction)

    def shift_phase(self, phase: float) -> "ComplexAmplitudeSeries":
        """Remove a constant phase: values * e^{-i phase}."""
        return self.with_values(self.values * np.exp(-1j * phase),
                                phase_correction=self.phase_correction + phase)

    def to_lab(self) -> np.ndarray:
        """Recover the lab-frame analytic signal u(t)."""
        u = self.values * np.exp(1j * self.phase_correction) * np.exp(-1j * self.rotation * self.times)
        return np.conj(u) if self.conjugated else u

    def slice(self, start: int, stop: int | None = None) -> "ComplexAmplitudeSeries":
        stop = self.n if stop is None else stop
        return self.with_values(self.values[..., start:stop], t0=self.t0 + start * self.dt)


def slow_amplitude(series: ComplexAmplitudeSeries, omega: float) -> ComplexAmplitudeSeries:
    """a = e^{i Omega t} conj(u) from a lab-frame series (no-op if already slow)."""
    if series.conjugated:
        raise ValueError("series is already a conjugated (slow) amplitude")
    return series.conj().rotate(omega)


def branch_rotations(params: ModeParams, branch: ResonanceBranch) -> tuple[float, float]:
    """Extra rotations taking slow amplitudes (a1, a2) into a branch frame.

    Detuning: b1 = a1 e^{-i delta t/2}, b2 = a2 e^{+i delta t/2}.  Sum:
    v1 = a1 e^{i sigma t/2}, v2 = conj(a2 e^{i sigma t/2}); the returned second
    entry then applies after the conjugation.  Single-mode branch of particle
    j: (b_j, b_j*) with b_j = a_j e^{i sigma_j t/2}.
    """
    delta = branch.effective_detuning(params)
    if branch.kind == "detuning":
        return -0.5 * delta, 0.5 * delta
    return 0.5 * delta, -0.5 * delta


def to_branch_frame(a1: ComplexAmplitudeSeries, a2: ComplexAmplitudeSeries,
                    params: ModeParams, branch: ResonanceBranch):
    """Rotating-frame mode vector (v1, v2) of a branch from slow amplitudes."""
    r1, r2 = branch_rotations(params, branch)
    if branch.kind == "detuning":
        return a1.rotate(r1), a2.rotate(r2)
    if branch.kind == "sum":
        return a1.rotate(r1), a2.conj().rotate(r2)
    aj = a1 if branch.particle == 1 else a2
    bj = aj.rotate(r1)
    return bj, bj.conj()
