"""Rotating-wave analytics for the three resonance branches.

In the rotating frame of a branch the mode vector ``v`` obeys

    (d/dt + gamma/2) v = (i/2) M v + noise,

with ``M`` the traceless 2x2 matrix returned by :func:`dynamical_matrix`.
For the detuning branch ``v = (b1, b2)``, for the sum branch
``v = (b1, b2*)`` and for the single-mode branch of particle j
``v = (bj, bj*)``.  Because ``M`` is traceless, ``M @ M = Lambda^2 I`` and
the evolution matrix is ``U(tau) = cos(Lambda tau/2) I + i sin(Lambda tau/2)/Lambda M``.
Damping enters only as the scalar factor ``exp(-gamma tau / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import DETUNING, SUM, ModeParams, NumericalError, ResonanceBranch

# |Lambda^2| below this fraction of the matrix scale counts as an exceptional point
EP_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ModeSolution:
    """Eigen-decomposition of a branch matrix.

    ``frequencies`` are (Omega_+, Omega_-) = (+Lambda/2, -Lambda/2); the
    columns of ``vectors`` are the matching unit-norm right eigenvectors of
    ``M`` with eigenvalues 2*Omega_+-.  At an exceptional point
    ``exceptional`` is set and ``vectors`` is ``None``.
    """

    branch: ResonanceBranch
    lam: complex
    frequencies: tuple[complex, complex]
    vectors: np.ndarray | None
    gamma: float
    exceptional: bool = False

    @property
    def linewidths(self) -> tuple[float, float]:
        """Energy decay rates gamma + 2 Im(Omega_+-) of the two modes (rad/s)."""
        return tuple(self.gamma + 2 * np.imag(w) for w in self.frequencies)


@dataclass(frozen=True)
class EvolutionCoefficients:
    """Entries of U(tau) = [[alpha1, beta1], [beta2, alpha2]]."""

    tau: np.ndarray
    alpha1: np.ndarray
    alpha2: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray

    def matrix(self) -> np.ndarray:
        """U as an array of shape tau.shape + (2, 2)."""
        return np.stack([np.stack([self.alpha1, self.beta1], axis=-1),
                         np.stack([self.beta2, self.alpha2], axis=-1)], axis=-2)

    def determinant(self):
        return self.alpha1 * self.alpha2 - self.beta1 * self.beta2


def dynamical_matrix(params: ModeParams, branch: ResonanceBranch = DETUNING) -> np.ndarray:
    """The bracketed 2x2 matrix of the rotating-frame equations of motion."""
    gt = params.g * np.exp(1j * params.phase)
    kd = params.kd
    delta = branch.effective_detuning(params)
    if branch.kind == "detuning":
        m = [[-delta, gt * np.exp(-1j * kd)],
             [np.conj(gt) * np.exp(-1j * kd), delta]]
    elif branch.kind == "sum":
        m = [[delta, np.conj(gt) * np.exp(1j * kd)],
             [-gt * np.exp(1j * kd), -delta]]
    else:
        j, jp = (1, 2) if branch.particle == 1 else (2, 1)
        omega = (params.omega1, params.omega2)
        gs = gt * np.sqrt(omega[jp - 1] / omega[j - 1])
        # second row is the complex conjugate of the first (v = (bj, bj*))
        phase = np.exp(-1j * (-1) ** j * kd)
        m = [[delta, -np.conj(gs) * phase],
             [gs * np.conj(phase), -delta]]
    return np.array(m, dtype=complex)


def _lambda(m: np.ndarray) -> complex:
    lam2 = complex(m[0, 0] ** 2 + m[0, 1] * m[1, 0])
    # rounding in exp(-2i kd) must not pick the wrong side of the branch cut
    if abs(lam2.imag) <= 4 * np.finfo(float).eps * (abs(m[0, 0]) ** 2 + abs(m[0, 1] * m[1, 0])):
        lam2 = complex(lam2.real, 0.0)
    return complex(np.sqrt(lam2))


def branch_lambda(params: ModeParams, branch: ResonanceBranch = DETUNING) -> complex:
    """Lambda = sqrt(M11^2 + M12 M21), principal branch."""
    return _lambda(dynamical_matrix(params, branch))


def _is_exceptional(m: np.ndarray) -> bool:
    lam2 = m[0, 0] ** 2 + m[0, 1] * m[1, 0]
    scale = abs(m[0, 0]) ** 2 + abs(m[0, 1] * m[1, 0])
    return abs(lam2) <= EP_TOLERANCE * scale


def _branch_phase(params: ModeParams, branch: ResonanceBranch) -> complex:
    # conventional global phases of the eigenvector forms; irrelevant for the norm
    if branch.kind == "detuning":
        return np.exp(1j * (params.kd + params.phase))
    if branch.kind == "sum":
        return -np.exp(-1j * (params.kd + params.phase))
    return np.exp(-1j * params.phase)


def eigen_solution(params: ModeParams, branch: ResonanceBranch = DETUNING) -> ModeSolution:
    """Complex eigenfrequencies +-Lambda/2 and right eigenvectors of a branch."""
    m = dynamical_matrix(params, branch)
    lam = _lambda(m)
    freqs = (lam / 2, -lam / 2)
    if _is_exceptional(m):
        return ModeSolution(branch, lam, freqs, None, params.gamma, exceptional=True)
    a, b, c = m[0, 0], m[0, 1], m[1, 0]
    phase = _branch_phase(params, branch)
    cols = []
    for mu in (lam, -lam):
        # (mu + a, c) is the closed form; (b, mu - a) covers its zero
        v = np.array([mu + a, c])
        alt = np.array([b, mu - a])
        if np.linalg.norm(alt) > np.linalg.norm(v):
            v = alt
        v = phase * v / np.sqrt(np.vdot(v, v).real)
        cols.append(v)
    return ModeSolution(branch, lam, freqs, np.column_stack(cols), params.gamma)


def eigenfrequency_locus(params: ModeParams, kd_grid) -> np.ndarray:
    """Resonant (delta = 0) frequency difference g exp(-i kd) along a kd grid.

    This is the branch of Lambda_det that is continuous in kd; it is
    2*pi-periodic and traces a circle of radius g.
    """
    return params.g * np.exp(-1j * np.asarray(kd_grid, dtype=float))


def _half_sinc(lam: complex, tau: np.ndarray) -> np.ndarray:
    """sin(lam tau / 2) / lam, continuous through lam = 0."""
    x = 0.5 * lam * tau
    small = np.abs(x) < 1e-4
    with np.errstate(all="ignore"):
        out = np.where(small, 0.5 * tau * (1 - x**2 / 6 + x**4 / 120), np.sin(x) / lam)
    return out


def evolution(params: ModeParams, branch: ResonanceBranch, tau) -> EvolutionCoefficients:
    """Coefficients of the evolution matrix U(tau) (damping excluded).

    Detuning branch: alpha_{1,2} = cos(L tau/2) -/+ i (delta/L) sin(L tau/2),
    beta_{1,2} = i g e^{+-i dphi} sin(L tau/2) e^{-i kd} / L.  Sum branch:
    alpha_{1,2} = cos +/- i (delta/L) sin, beta_{1,2} = +-i g e^{-/+ i dphi} sin e^{i kd} / L.
    At an exceptional point the Lambda -> 0 limit is taken.
    """
    tau = np.asarray(tau, dtype=float)
    m = dynamical_matrix(params, branch)
    lam = _lambda(m)
    cos = np.cos(0.5 * lam * tau)
    s = _half_sinc(lam, tau)  # sin(L tau/2)/L
    delta = branch.effective_detuning(params)
    g, dphi, kd = params.g, params.phase, params.kd
    if branch.kind == "detuning":
        alpha1 = cos - 1j * delta * s
        alpha2 = cos + 1j * delta * s
        beta1 = 1j * g * np.exp(1j * dphi) * s * np.exp(-1j * kd)
        beta2 = 1j * g * np.exp(-1j * dphi) * s * np.exp(-1j * kd)
    elif branch.kind == "sum":
        alpha1 = cos + 1j * delta * s
        alpha2 = cos - 1j * delta * s
        beta1 = 1j * g * np.exp(-1j * dphi) * s * np.exp(1j * kd)
        beta2 = -1j * g * np.exp(1j * dphi) * s * np.exp(1j * kd)
    else:
        alpha1 = cos + 1j * m[0, 0] * s
        alpha2 = cos + 1j * m[1, 1] * s
        beta1 = 1j * m[0, 1] * s
        beta2 = 1j * m[1, 0] * s
    return EvolutionCoefficients(tau, alpha1 + 0j, alpha2 + 0j, beta1 + 0j, beta2 + 0j)


def evolution_matrix(params: ModeParams, branch: ResonanceBranch, tau) -> np.ndarray:
    return evolution(params, branch, tau).matrix()


def damped_evolution_matrix(params: ModeParams, branch: ResonanceBranch, tau, rate: float,
                            shift=0.0) -> np.ndarray:
    """exp(-rate * tau) U(tau + shift), evaluated without intermediate overflow.

    U grows like exp(|Im Lambda| tau / 2); forming the product with the
    decay inside one exponential keeps long integration ranges finite.
    """
    tau = np.asarray(tau, dtype=float)
    m = dynamical_matrix(params, branch)
    lam = _lambda(m)
    arg = tau + shift
    x = 0.5 * lam * arg
    decay = -rate * tau
    with np.errstate(over="ignore", invalid="ignore"):
        ep = np.exp(1j * x + decay)
        em = np.exp(-1j * x + decay)
        small = np.abs(x) < 1e-4
        sinc = np.where(small, 0.5 * arg * (1 - x**2 / 6 + x**4 / 120) * np.exp(decay),
                        (ep - em) / (2j * lam if lam != 0 else 1.0))
    cos = 0.5 * (ep + em)
    return cos[..., None, None] * np.eye(2) + 1j * sinc[..., None, None] * m


def integrate_rwa(params: ModeParams, branch: ResonanceBranch, v0, times, rtol=1e-12, atol=1e-14):
    """Deterministic rotating-frame dynamics by direct ODE integration.

    Returns the mode vector at ``times``, shape (len(times), 2).  This does not
    use U(tau) and serves as an independent check of it.
    """
    m = dynamical_matrix(params, branch)
    gamma = params.gamma
    gen = 0.5j * m - 0.5 * gamma * np.eye(2)

    def rhs(_t, y):
        v = y[:2] + 1j * y[2:]
        dv = gen @ v
        return np.concatenate([dv.real, dv.imag])

    v0 = np.asarray(v0, dtype=complex)
    times = np.asarray(times, dtype=float)
    sol = integrate.solve_ivp(rhs, (0.0, times[-1]), np.concatenate([v0.real, v0.imag]),
                              t_eval=times, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalError(f"RWA integration failed: {sol.message}")
    return (sol.y[:2] + 1j * sol.y[2:]).T


def _quad_complex(func, a, b, rel_tol, abs_tol=0.0):
    re, err_re = integrate.quad(lambda x: func(x).real, a, b, epsrel=rel_tol,
                                epsabs=abs_tol, limit=400)
    im, err_im = integrate.quad(lambda x: func(x).imag, a, b, epsrel=rel_tol,
                                epsabs=abs_tol, limit=400)
    return re + 1j * im, err_re + 1j * err_im


def quench_occupations(params: ModeParams, n1_initial: float, n2_initial: float, t,
                       branch: ResonanceBranch = DETUNING, rel_tol: float = 1e-8):
    """Mean occupations and cross-correlation after a quench at t = 0.

    The initial state is uncorrelated with occupations ``n1_initial``,
    ``n2_initial``; after t = 0 both modes relax with ``params.gamma`` towards
    the bath occupations ``params.n1``, ``params.n2`` while the branch
    coupling acts.  Returns ``(occ1, occ2, cross)`` evaluated at ``t`` where
    ``cross`` = <v1* v2>.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("quench times must be non-negative")
    if n1_initial < 0 or n2_initial < 0:
        raise ValueError("initial occupations must be non-negative")
    gamma, n1, n2 = params.gamma, params.n1, params.n2

    def coeffs(s):
        c = evolution(params, branch, np.asarray(s, dtype=float))
        return c.alpha1, c.alpha2, c.beta1, c.beta2

    def integrand(s):
        a1, a2, b1, b2 = coeffs(s)
        w = np.exp(-gamma * s)
        return np.array([w * (n1 * abs(a1) ** 2 + n2 * abs(b1) ** 2),
                         w * (n2 * abs(a2) ** 2 + n1 * abs(b2) ** 2),
                         w * (n1 * np.conj(a1) * b2 + n2 * np.conj(b1) * a2)])

    abs_tol = 1e-14 * (n1 + n2) / max(gamma, 1e-300)
    order = np.argsort(t)
    ts = t[order]
    acc = np.zeros(3, dtype=complex)
    bath = np.zeros((len(ts), 3), dtype=complex)
    prev = 0.0
    for i, ti in enumerate(ts):
        if ti > prev:
            for k in range(3):
                val, err = _quad_complex(lambda s, k=k: integrand(s)[k], prev, ti, rel_tol,
                                          abs_tol)
                if not np.isfinite(val):
                    raise NumericalError(f"quench quadrature failed on [{prev}, {ti}] (term {k})")
                acc[k] += val
            prev = ti
        bath[i] = gamma * acc
    a1, a2, b1, b2 = coeffs(ts)
    decay = np.exp(-gamma * ts)
    occ1 = (n1_initial * abs(a1) ** 2 + n2_initial * abs(b1) ** 2) * decay + bath[:, 0].real
    occ2 = (n2_initial * abs(a2) ** 2 + n1_initial * abs(b2) ** 2) * decay + bath[:, 1].real
    cross = (n1_initial * np.conj(a1) * b2 + n2_initial * np.conj(b1) * a2) * decay + bath[:, 2]
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    return occ1[inv], occ2[inv], cross[inv]


__all__ = [
    "DETUNING", "SUM", "ModeSolution", "EvolutionCoefficients", "dynamical_matrix",
    "branch_lambda", "eigen_solution", "eigenfrequency_locus", "evolution",
    "evolution_matrix", "integrate_rwa", "quench_occupations",
]
