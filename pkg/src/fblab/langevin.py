"""Stochastic time-domain simulation of the two trapped particles.

Each particle obeys

    z_j'' + (gamma + gamma_fb,j) z_j' + Omega_j^2 z_j = F_j(t)/m + xi_j(t),

with thermal noise <xi_j(t) xi_j(t')> = 2 gamma k_B T_j / m delta(t - t') from the gas
only (feedback damping is cold).  ``T_j = n_j hbar Omega_j / k_B`` so that the
uncoupled stationary occupation is ``n_j``.  The binding force is either the
linearized expansion (default) or the full sinusoid.

The integrator is stochastic Heun with additive noise; trajectories are
independent and their noise streams are seeded by (seed, trajectory, particle),
so any subset of trajectories can be regenerated on its own.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numba
import numpy as np

from .frames import ComplexAmplitudeSeries
from .model import (DETUNING, HBAR, K_B, ConfigurationError, ModeParams, NumericalError,
                    PhysicalConfig, ResonanceBranch, reduce, zero_point_length)

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba; avoid the warning and use the portable pool
    numba.config.THREADING_LAYER = "workqueue"

# Gaussian increments are drawn in blocks of this many steps
NOISE_BLOCK = 4096
# at least this many steps per fastest period
MIN_STEPS_PER_PERIOD = 50

_DEFAULT_CONFIG = PhysicalConfig()


@dataclass(frozen=True)
class Stage:
    """One protocol segment.

    ``feedback`` is the extra (noiseless) damping per particle, rad/s;
    ``detuning`` overrides the optical detuning when not ``None``.
    """

    duration: float
    feedback: tuple[float, float] = (0.0, 0.0)
    interaction: bool = True
    detuning: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ConfigurationError("stage duration must be positive")
        if len(self.feedback) != 2 or min(self.feedback) < 0:
            raise ConfigurationError("feedback damping must be two non-negative rates")


@dataclass(frozen=True)
class Protocol:
    """Ordered stages plus optional initial occupations (thermal by default)."""

    stages: tuple[Stage, ...]
    initial_occupations: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.stages:
            raise ConfigurationError("a protocol needs at least one stage")
        if self.initial_occupations is not None and min(self.initial_occupations) < 0:
            raise ConfigurationError("initial occupations must be non-negative")

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.stages))

    @classmethod
    def steady(cls, duration: float, interaction: bool = True) -> "Protocol":
        return cls((Stage(duration, interaction=interaction),))

    def describe(self) -> list[dict]:
        return [{"duration": s.duration, "feedback": list(s.feedback),
                 "interaction": s.interaction, "detuning": s.detuning} for s in self.stages]


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Recorded positions and velocities, shape (n_traj, 2, n_samples).

    ``dt`` is the integration step; samples are taken every ``record_every``
    steps starting at t = 0 (absolute time).
    """

    dt: float
    n_steps: int
    record_every: int
    z: np.ndarray
    v: np.ndarray
    seed: int
    protocol: Protocol
    params: ModeParams
    mass: float
    traj_offset: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_traj(self) -> int:
        return self.z.shape[0]

    @property
    def sample_dt(self) -> float:
        return self.dt * self.record_every

    @property
    def times(self) -> np.ndarray:
        return self.sample_dt * np.arange(self.z.shape[-1])


@numba.njit(cache=True, fastmath=False)
def _accel(z1, z2, v1, v2, t, w1sq, w2sq, gam1, gam2, coup, drive, kd, dphi, dw, full, kp):
    arg = dw * t + dphi
    phi1 = kd - arg
    phi2 = kd + arg
    if full:
        dz = kp * (z2 - z1)
        f1 = drive * math.sin(phi1 + dz)
        f2 = drive * math.sin(phi2 - dz)
    else:
        f1 = drive * math.sin(phi1) + coup * math.cos(phi1) * (z2 - z1)
        f2 = drive * math.sin(phi2) + coup * math.cos(phi2) * (z1 - z2)
    a1 = -w1sq * z1 - gam1 * v1 + f1
    a2 = -w2sq * z2 - gam2 * v2 + f2
    return a1, a2


@numba.njit(parallel=True, cache=True)
def _heun_block(state, noise, step0, n, dt, w1sq, w2sq, gam1, gam2, sig1, sig2, coup, drive,
                kd, dphi, dw, full, kp, record_every, z_out, v_out, bad):
    """Advance every trajectory by ``n`` steps starting at global step ``step0``.

    ``state`` is (n_traj, 4) = (z1, z2, v1, v2), updated in place; samples land
    in ``z_out``/``v_out`` whenever the global step count hits a multiple of
    ``record_every``.  ``bad[i]`` receives the first non-finite step (or stays -1).
    """
    sq = math.sqrt(dt)
    for i in numba.prange(state.shape[0]):
        if bad[i] >= 0:
            continue
        z1, z2, v1, v2 = state[i, 0], state[i, 1], state[i, 2], state[i, 3]
        for k in range(n):
            step = step0 + k
            t = step * dt
            n1 = sig1 * sq * noise[i, 0, k]
            n2 = sig2 * sq * noise[i, 1, k]
            a1, a2 = _accel(z1, z2, v1, v2, t, w1sq, w2sq, gam1, gam2, coup, drive,
                            kd, dphi, dw, full, kp)
            pz1 = z1 + dt * v1
            pz2 = z2 + dt * v2
            pv1 = v1 + dt * a1 + n1
            pv2 = v2 + dt * a2 + n2
            b1, b2 = _accel(pz1, pz2, pv1, pv2, t + dt, w1sq, w2sq, gam1, gam2, coup, drive,
                            kd, dphi, dw, full, kp)
            z1 = z1 + 0.5 * dt * (v1 + pv1)
            z2 = z2 + 0.5 * dt * (v2 + pv2)
            v1 = v1 + 0.5 * dt * (a1 + b1) + n1
            v2 = v2 + 0.5 * dt * (a2 + b2) + n2
            done = step + 1
            if done % record_every == 0:
                if not (math.isfinite(z1) and math.isfinite(z2)
                        and math.isfinite(v1) and math.isfinite(v2)):
                    bad[i] = done
                    break
                j = done // record_every
                z_out[i, 0, j] = z1
                z_out[i, 1, j] = z2
                v_out[i, 0, j] = v1
                v_out[i, 1, j] = v2
        state[i, 0], state[i, 1], state[i, 2], state[i, 3] = z1, z2, v1, v2
        if bad[i] < 0 and not (math.isfinite(z1) and math.isfinite(v1)
                               and math.isfinite(z2) and math.isfinite(v2)):
            bad[i] = step0 + n


def max_stable_dt(params: ModeParams, detunings=()) -> float:
    """Largest step allowed by the resolution guard."""
    fastest = max([params.omega1, params.omega2, abs(params.detuning)]
                  + [abs(d) for d in detunings if d is not None])
    return 2 * math.pi / (MIN_STEPS_PER_PERIOD * fastest)


def prewarp(omega: float, dt: float) -> float:
    """Trap frequency to integrate with so that Heun oscillates at ``omega``.

    A Heun step of a free oscillator advances the phase by
    arctan(x / (1 - x^2/2)) = x + x^3/6 + O(x^5) with x = omega_sim dt, so
    omega_sim (1 + (omega_sim dt)^2 / 6) = omega is solved by Newton iteration.
    """
    w = omega
    for _ in range(4):
        w -= (w * (1 + (w * dt) ** 2 / 6) - omega) / (1 + 0.5 * (w * dt) ** 2)
    return w


def default_dt(params: ModeParams, steps_per_period: int = 100) -> float:
    """Step giving ``steps_per_period`` steps per fastest period."""
    fastest = max(params.omega1, params.omega2, abs(params.detuning))
    return 2 * math.pi / (steps_per_period * fastest)


def _resolve_params(params, omegas, mass, wavenumber, modified_wavenumber):
    if isinstance(params, PhysicalConfig):
        if omegas is None:
            raise ConfigurationError("simulating a PhysicalConfig needs omegas=(Omega1, Omega2)")
        cfg = params
        return (reduce(cfg, *omegas), cfg.mass if mass is None else mass,
                cfg.wavenumber, cfg.modified_wavenumber)
    if not isinstance(params, ModeParams):
        raise ConfigurationError(f"expected ModeParams or PhysicalConfig, got {type(params)}")
    return (params, _DEFAULT_CONFIG.mass if mass is None else mass,
            _DEFAULT_CONFIG.wavenumber if wavenumber is None else wavenumber,
            _DEFAULT_CONFIG.modified_wavenumber if modified_wavenumber is None
            else modified_wavenumber)


def _generators(seed: int, traj_ids) -> list:
    return [[np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, int(i), j])))
             for j in (0, 1)] for i in traj_ids]


def simulate(params, protocol: Protocol | None = None, dt: float | None = None,
             duration: float | None = None, n_traj: int = 1, seed: int = 0, *,
             record_every: int = 1, force: str = "linear", include_drive: bool = True,
             mass: float | None = None, omegas=None, wavenumber: float | None = None,
             modified_wavenumber: float | None = None, traj_offset: int = 0,
             initial_state: np.ndarray | None = None, warp: bool = True) -> TrajectoryEnsemble:
    """Integrate an ensemble of the coupled Langevin equations.

    Parameters
    ----------
    params : ModeParams or PhysicalConfig
        A PhysicalConfig is reduced with ``omegas``; its mass and wavenumbers
        are then used.
    protocol : Protocol, optional
        Defaults to a single interacting stage of length ``duration``.
    dt : float, optional
        Integration step; defaults to 100 steps per fastest period.  Must
        respect the guard ``dt <= 2 pi / (50 max(Omega1, Omega2, |Delta omega|))``.
    record_every : int
        Keep every k-th step.
    force : {"linear", "full"}
        Linearized expansion or full sinusoidal binding force.  In the full
        force the amplitude is ``2 g sqrt(O1 O2) m / k'``.
    include_drive : bool
        Keep the displacement-independent part of the force.
    traj_offset : int
        Index of the first trajectory, so ensembles can be built in batches.
    warp : bool
        Integrate with :func:`prewarp`-corrected trap frequencies, removing
        the leading O(dt^2) frequency error of the scheme.
    initial_state : array (n_traj, 4), optional
        (z1, z2, v1, v2) per trajectory; otherwise thermal draws.
    """
    params, mass, k, kp = _resolve_params(params, omegas, mass, wavenumber, modified_wavenumber)
    if protocol is None:
        if duration is None:
            raise ConfigurationError("give a protocol or a duration")
        protocol = Protocol.steady(duration)
    elif duration is not None and not math.isclose(duration, protocol.duration, rel_tol=1e-12):
        raise ConfigurationError("duration disagrees with the protocol")
    if force not in ("linear", "full"):
        raise ConfigurationError("force must be 'linear' or 'full'")
    if n_traj < 1 or record_every < 1:
        raise ConfigurationError("n_traj and record_every must be >= 1")
    guard = max_stable_dt(params, [s.detuning for s in protocol.stages])
    if dt is None:
        dt = min(default_dt(params), guard)
    if not (dt > 0 and dt <= guard * (1 + 1e-12)):
        raise ConfigurationError(f"dt = {dt:.3g} s violates the resolution guard {guard:.3g} s")
    if protocol.duration < dt:
        raise ConfigurationError("duration shorter than one step")

    w1, w2 = params.omega1, params.omega2
    ws1, ws2 = (prewarp(w1, dt), prewarp(w2, dt)) if warp else (w1, w2)
    temps = (params.n1 * HBAR * w1 / K_B, params.n2 * HBAR * w2 / K_B)
    sig = [math.sqrt(2 * params.gamma * K_B * temps[j] / mass) for j in (0, 1)]
    coup_full = 2 * params.g * math.sqrt(w1 * w2)

    stage_steps = [max(1, int(round(s.duration / dt))) for s in protocol.stages]
    n_steps = int(sum(stage_steps))
    n_samples = n_steps // record_every + 1
    traj_ids = range(traj_offset, traj_offset + n_traj)
    gens = _generators(seed, traj_ids)

    if initial_state is None:
        occ = protocol.initial_occupations or (params.n1, params.n2)
        state = np.empty((n_traj, 4))
        for i, (g1, g2) in enumerate(gens):
            for j, gen in enumerate((g1, g2)):
                w = (w1, w2)[j]
                var_z = occ[j] * HBAR / (mass * w)  # k_B T / (m Omega^2)
                z0, v0 = gen.standard_normal(2)
                state[i, j] = math.sqrt(var_z) * z0
                state[i, j + 2] = math.sqrt(var_z) * w * v0
    else:
        state = np.array(initial_state, dtype=float).reshape(n_traj, 4).copy()

    z_out = np.full((n_traj, 2, n_samples), np.nan)
    v_out = np.full((n_traj, 2, n_samples), np.nan)
    z_out[:, :, 0] = state[:, :2]
    v_out[:, :, 0] = state[:, 2:]
    bad = np.full(n_traj, -1, dtype=np.int64)

    step = 0
    noise = np.empty((n_traj, 2, NOISE_BLOCK))
    for stage, count in zip(protocol.stages, stage_steps):
        dw = params.detuning if stage.detuning is None else stage.detuning
        coup = coup_full if stage.interaction else 0.0
        if force == "full":
            drive = coup / kp
        else:
            drive = coup / k if include_drive else 0.0
        gam1 = params.gamma + stage.feedback[0]
        gam2 = params.gamma + stage.feedback[1]
        done = 0
        while done < count:
            n = min(NOISE_BLOCK, count - done)
            for i, (g1, g2) in enumerate(gens):
                noise[i, 0, :n] = g1.standard_normal(n)
                noise[i, 1, :n] = g2.standard_normal(n)
            _heun_block(state, noise, step, n, dt, ws1 * ws1, ws2 * ws2, gam1, gam2,
                        sig[0], sig[1],
                        coup, drive, params.kd, params.phase, dw, force == "full", kp,
                        record_every, z_out, v_out, bad)
            if np.any(bad >= 0):
                i = int(np.argmax(bad >= 0))
                raise NumericalError(
                    f"non-finite state in trajectory {traj_offset + i} at step {int(bad[i])}")
            step += n
            done += n

    meta = {"force": force, "include_drive": include_drive, "wavenumber": k,
            "modified_wavenumber": kp, "warp": warp}
    return TrajectoryEnsemble(dt, n_steps, record_every, z_out, v_out, seed, protocol, params,
                              mass, traj_offset, meta)


def to_complex_amplitudes(traj: TrajectoryEnsemble, params: ModeParams | None = None):
    """Slow amplitudes a_j(t) = e^{i Omega_j t} (z_j + i v_j / Omega_j) / (2 z_zpf,j).

    Returns one :class:`ComplexAmplitudeSeries` per particle, values of shape
    (n_traj, n_samples).
    """
    params = traj.params if params is None else params
    t = traj.times
    out = []
    for j, w in enumerate((params.omega1, params.omega2)):
        zpf = float(zero_point_length(traj.mass, w))
        c = (traj.z[:, j] + 1j * traj.v[:, j] / w) / (2 * zpf)
        # u = conj(c) is the lab analytic-signal convention
        out.append(ComplexAmplitudeSeries(np.exp(1j * w * t) * c, traj.sample_dt, 0.0,
                                          rotation=w, conjugated=True))
    return out[0], out[1]


@dataclass(frozen=True)
class QuenchResult:
    """Ensemble means after the switch from cooling to interaction.

    ``t`` is the time since switch-on; ``cross`` is <v1* v2> in the branch
    frame.  ``*_err`` are standard errors of the means.  If binning was
    requested, ``binned`` holds (t, occ1, occ2, occ1_err, occ2_err) with
    each trajectory averaged over a bin before the ensemble statistics.
    """

    t: np.ndarray
    occ1: np.ndarray
    occ2: np.ndarray
    cross: np.ndarray
    occ1_err: np.ndarray
    occ2_err: np.ndarray
    cross_err: np.ndarray
    initial: tuple[float, float]
    n_traj: int
    branch: ResonanceBranch
    binned: tuple | None = None


def _bin_average(x: np.ndarray, n_bins: int) -> np.ndarray:
    n = x.shape[-1] - x.shape[-1] % n_bins
    return x[..., :n].reshape(x.shape[:-1] + (n_bins, -1)).mean(axis=-1)


def run_quench(params: ModeParams, gamma_fb: float, t_cool: float, t_free: float,
               dt: float | None = None, n_traj: int = 100, seed: int = 0, *,
               branch: ResonanceBranch = DETUNING, record_every: int = 1,
               batch: int = 250, n_bins: int | None = None, **kwargs) -> QuenchResult:
    """Cool particle 1, then switch cooling off and the interaction on.

    During the cooling stage the interaction is disabled, which idealizes a
    far-detuned drive.  Trajectories are simulated in batches of ``batch`` and
    only the post-quench rotating-frame moments are kept.
    """
    if gamma_fb < 0:
        raise ConfigurationError("gamma_fb must be non-negative")
    from .frames import to_branch_frame

    protocol = Protocol((Stage(t_cool, feedback=(gamma_fb, 0.0), interaction=False),
                         Stage(t_free)))
    sums = None
    bsums = None
    done = 0
    while done < n_traj:
        m = min(batch, n_traj - done)
        ens = simulate(params, protocol, dt, n_traj=m, seed=seed, record_every=record_every,
                       traj_offset=done, **kwargs)
        i0 = int(round(int(round(t_cool / ens.dt)) / record_every))
        a1, a2 = to_complex_amplitudes(ens)
        v1, v2 = to_branch_frame(a1.slice(i0), a2.slice(i0), ens.params, branch)
        o1 = np.abs(v1.values) ** 2
        o2 = np.abs(v2.values) ** 2
        cr = np.conj(v1.values) * v2.values
        parts = [o1.sum(0), o2.sum(0), cr.sum(0), (o1**2).sum(0), (o2**2).sum(0),
                 (np.abs(cr) ** 2).sum(0)]
        sums = parts if sums is None else [s + p for s, p in zip(sums, parts)]
        t = v1.times - v1.t0
        if n_bins:
            b1, b2 = _bin_average(o1, n_bins), _bin_average(o2, n_bins)
            bparts = [b1.sum(0), b2.sum(0), (b1**2).sum(0), (b2**2).sum(0)]
            bsums = bparts if bsums is None else [s + p for s, p in zip(bsums, bparts)]
        done += m
    n = float(n_traj)
    means = [s / n for s in sums[:3]]
    errs = []
    for k in range(3):
        var = sums[3 + k] / n - np.abs(means[k]) ** 2
        errs.append(np.sqrt(np.maximum(var, 0) / max(n - 1, 1)))
    binned = None
    if n_bins:
        bm = [s / n for s in bsums[:2]]
        be = [np.sqrt(np.maximum(bsums[2 + k] / n - bm[k] ** 2, 0) / max(n - 1, 1))
              for k in range(2)]
        binned = (_bin_average(t, n_bins), bm[0], bm[1], be[0], be[1])
    return QuenchResult(t, means[0], means[1], means[2], errs[0], errs[1], errs[2],
                        (float(means[0][0]), float(means[1][0])), n_traj, branch, binned)
