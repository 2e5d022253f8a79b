"""Parameter records, physical constants and the resonance-branch taxonomy.

Everything is SI: lengths in m, angular frequencies and rates in rad/s,
phases in rad.  ``kd`` is stored exactly as supplied (no reduction modulo
2*pi); functions that are periodic in it say so.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K
EPS0 = 8.8541878128e-12  # F / m


class FblabError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(FblabError, ValueError):
    """Invalid parameters or settings."""


class DomainError(FblabError, ValueError):
    """A derived quantity is not finite."""


class NumericalError(FblabError, RuntimeError):
    """A numerical procedure failed (blow-up, quadrature, fit)."""


class DivergenceError(NumericalError):
    """A stationary moment does not exist because the system is unstable."""


@dataclass(frozen=True)
class PhysicalConfig:
    """Microscopic description of two identical particles in detuned tweezers.

    ``field1``/``field2`` are the field magnitudes |E0,j| at the particles,
    ``phase1``/``phase2`` the tweezer phases and ``optical_detuning`` the
    beat frequency between the two tweezers.
    """

    wavelength: float = 1064e-9
    rayleigh_length: float = 1.0e-6
    radius: float = 105e-9
    permittivity: float = 2.1
    density: float = 2200.0
    polarization_angle: float = math.pi / 2
    field1: float = 1.0e7
    field2: float = 1.0e7
    distance: float = 5.0e-6
    damping: float = 2 * math.pi * 570.0
    temperature: float = 293.0
    phase1: float = 0.0
    phase2: float = 0.0
    optical_detuning: float = 0.0

    def __post_init__(self):
        for name in ("wavelength", "rayleigh_length", "radius", "density",
                     "field1", "field2", "distance", "temperature"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {value!r}")
        if self.damping < 0:
            raise ConfigurationError("damping must be non-negative")
        if self.permittivity <= 1:
            raise ConfigurationError("permittivity must exceed 1")
        if not 0 < self.modified_wavenumber < self.wavenumber:
            raise ConfigurationError("need 0 < k' < k; increase the Rayleigh length")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def modified_wavenumber(self) -> float:
        """k' = k - 1/z_R, the wavenumber seen by the axial binding force."""
        return self.wavenumber - 1.0 / self.rayleigh_length

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3

    @property
    def mass(self) -> float:
        return self.density * self.volume

    @property
    def polarizability(self) -> float:
        eps = self.permittivity
        return 3 * EPS0 * self.volume * (eps - 1) / (eps + 2)

    @property
    def kd(self) -> float:
        return self.wavenumber * self.distance

    @property
    def phase_difference(self) -> float:
        return self.phase2 - self.phase1

    def binding_prefactor(self) -> float:
        """Amplitude of the un-linearized axial binding force, in N."""
        k, kp = self.wavenumber, self.modified_wavenumber
        return (k**2 * kp * self.polarizability**2 * math.sin(self.polarization_angle)**2
                / (8 * math.pi * EPS0 * self.distance) * self.field1 * self.field2)


@dataclass(frozen=True)
class ModeParams:
    """Reduced two-oscillator model.

    Attributes
    ----------
    omega1, omega2 : trap frequencies (rad/s)
    gamma : gas damping rate, equal for both particles (rad/s)
    g : maximum coupling rate (rad/s)
    detuning : optical detuning between the tweezers, Delta omega (rad/s)
    phase : optical phase difference Delta phi (rad)
    kd : traveling phase over the trap separation (rad)
    n1, n2 : thermal occupations
    """

    omega1: float
    omega2: float
    gamma: float
    g: float
    detuning: float = 0.0
    phase: float = 0.0
    kd: float = 0.0
    n1: float = 1.0
    n2: float = 1.0

    def __post_init__(self):
        values = dataclasses.astuple(self)
        if not all(np.isfinite(v) for v in values):
            raise ConfigurationError(f"ModeParams fields must be finite: {self}")
        if self.omega1 <= 0 or self.omega2 <= 0:
            raise ConfigurationError("trap frequencies must be positive")
        if self.gamma < 0 or self.g < 0:
            raise ConfigurationError("gamma and g must be non-negative")
        if self.n1 <= 0 or self.n2 <= 0:
            raise ConfigurationError("thermal occupations must be positive")

    @classmethod
    def from_temperature(cls, omega1, omega2, gamma, g, temperature, **kwargs):
        n1 = K_B * temperature / (HBAR * omega1)
        n2 = K_B * temperature / (HBAR * omega2)
        return cls(omega1, omega2, gamma, g, n1=n1, n2=n2, **kwargs)

    @property
    def mech_detuning(self) -> float:
        """Delta Omega = Omega2 - Omega1."""
        return self.omega2 - self.omega1

    @property
    def omega_mean(self) -> float:
        return 0.5 * (self.omega1 + self.omega2)

    @property
    def occupations(self) -> np.ndarray:
        return np.array([self.n1, self.n2])

    def replace(self, **changes) -> "ModeParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModeParams":
        return cls(**{k: float(v) for k, v in data.items()})

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ModeParams":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ResonanceBranch:
    """Which sideband resonance the optical detuning selects.

    ``kind`` is ``"detuning"`` (Delta omega near Omega2 - Omega1), ``"sum"``
    (near Omega1 + Omega2) or ``"single"`` (near 2 Omega_j, with
    ``particle`` = j).
    """

    kind: str
    particle: int | None = None

    def __post_init__(self):
        if self.kind not in ("detuning", "sum", "single"):
            raise ConfigurationError(f"unknown branch {self.kind!r}")
        if (self.kind == "single") != (self.particle in (1, 2)):
            raise ConfigurationError("single-mode branch needs particle 1 or 2; others take none")

    def effective_detuning(self, params: ModeParams) -> float:
        """delta, the distance of Delta omega from this resonance (rad/s)."""
        if self.kind == "detuning":
            return params.detuning - params.mech_detuning
        if self.kind == "sum":
            return params.detuning - 2 * params.omega_mean
        omega = params.omega1 if self.particle == 1 else params.omega2
        return params.detuning - 2 * omega

    def resonant_detuning(self, params: ModeParams) -> float:
        """The optical detuning at which delta = 0."""
        return params.detuning - self.effective_detuning(params)

    def __str__(self):
        return self.kind if self.particle is None else f"single{self.particle}"

    @classmethod
    def parse(cls, text: str) -> "ResonanceBranch":
        text = text.strip().lower()
        if text in ("detuning", "sum"):
            return cls(text)
        if text in ("single1", "single2"):
            return cls("single", int(text[-1]))
        raise ConfigurationError(f"unknown branch {text!r}")


DETUNING = ResonanceBranch("detuning")
SUM = ResonanceBranch("sum")


def single_mode(j: int) -> ResonanceBranch:
    return ResonanceBranch("single", j)


def reduce(config: PhysicalConfig, omega1: float, omega2: float) -> ModeParams:
    """Collapse a microscopic configuration onto the two-mode model.

    The coupling rate is
    g = k^2 k'^2 alpha^2 sin^2(theta) |E1 E2| / (16 pi eps0 m d sqrt(O1 O2)).
    """
    if not (omega1 > 0 and omega2 > 0):
        raise ConfigurationError("trap frequencies must be positive")
    k, kp = config.wavenumber, config.modified_wavenumber
    with np.errstate(all="ignore"):
        g = (k**2 * kp**2 * config.polarizability**2 * math.sin(config.polarization_angle)**2
             * config.field1 * config.field2
             / (16 * math.pi * EPS0 * config.mass * config.distance * math.sqrt(omega1 * omega2)))
    if not math.isfinite(g):
        raise DomainError(f"coupling rate is not finite for {config}")
    n1 = K_B * config.temperature / (HBAR * omega1)
    n2 = K_B * config.temperature / (HBAR * omega2)
    return ModeParams(omega1=omega1, omega2=omega2, gamma=config.damping, g=g,
                      detuning=config.optical_detuning, phase=config.phase_difference,
                      kd=config.kd, n1=n1, n2=n2)


def field_product_for_coupling(config: PhysicalConfig, g: float, omega1: float,
                               omega2: float) -> float:
    """|E1 E2| that makes ``reduce`` return coupling rate ``g``."""
    k, kp = config.wavenumber, config.modified_wavenumber
    return (g * 16 * math.pi * EPS0 * config.mass * config.distance * math.sqrt(omega1 * omega2)
            / (k**2 * kp**2 * config.polarizability**2 * math.sin(config.polarization_angle)**2))


def zero_point_length(mass: float, omega) -> np.ndarray:
    """z_zpf = sqrt(hbar / (2 m Omega))."""
    return np.sqrt(HBAR / (2 * mass * np.asarray(omega, dtype=float)))
