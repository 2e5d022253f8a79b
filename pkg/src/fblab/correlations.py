"""Stationary first- and second-order correlations of the coupled modes.

All quantities are in occupation units: an uncoupled mode j has
``<|v_j|^2> = n_j``.  The defining integral

    C_jj'(tau) = gamma e^{-gamma tau/2} int_0^inf e^{-gamma s}
                 sum_k n_k conj(U_jk(s)) U_j'k(s + tau) ds,   tau >= 0,

is evaluated by adaptive quadrature and is the reference for every closed
form in this module.  Negative lags use the swapped construction, which is
equivalent to ``C_jj'(-tau) = conj(C_j'j(tau))``.

Only the detuning and sum branches are supported: for the single-mode
branch the two components of ``v`` share one noise source.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .model import (DETUNING, SUM, ConfigurationError, DivergenceError, ModeParams,
                    NumericalError, ResonanceBranch)
from .rwa import _is_exceptional, damped_evolution_matrix, dynamical_matrix

QUAD_REL_TOL = 1e-10
# relative mismatch above which a closed form is reported as unreliable
CLOSED_FORM_FLAG_TOL = 1e-4
# the integrand is below e^{-TAIL} of its scale past the truncation point
TAIL = 50.0


@dataclass(frozen=True)
class CorrelationSeries:
    """A correlation function sampled on a lag grid."""

    tau: np.ndarray
    values: np.ndarray
    kind: str
    branch: ResonanceBranch
    params_hash: str


@dataclass(frozen=True)
class ClosedFormResult:
    """Printed closed form for g1_12 after sign resolution.

    ``A``/``B`` are (tau >= 0, tau < 0) pairs with the resolved signs already
    folded into ``A``.  ``flagged`` is set when the closed form still differs
    from quadrature by more than ``CLOSED_FORM_FLAG_TOL`` at the probe lag.
    """

    tau: np.ndarray
    values: np.ndarray
    A: tuple[complex, complex]
    B: tuple[complex, complex]
    deviation: tuple[float, float]
    flagged: bool


@dataclass(frozen=True)
class StationaryVariances:
    """Collective-quadrature variances in occupation units.

    ``z_plus`` is the squashed combination at kd = pi/2.  ``total_closed_form``
    is the closed-form expression for the sum of variances (detuning branch
    only, else ``None``).
    """

    z_plus: float
    z_minus: float
    total: float
    total_closed_form: float | None
    thermal: float = 1.0

    @property
    def normalized(self) -> tuple[float, float]:
        """(z_plus, z_minus) divided by the uncoupled level (n1 + n2)/2."""
        return self.z_plus / self.thermal, self.z_minus / self.thermal

    @property
    def squashing_db(self) -> float:
        return float(10 * np.log10(self.z_plus / self.thermal))


@dataclass(frozen=True)
class GainEstimate:
    """Parametric gain from normalized squashed/anti-squashed variances."""

    r: float
    r_plus: float
    r_minus: float
    consistent: bool
    squashing_db: float
    r_max: float | None = None


def params_hash(params: ModeParams, branch: ResonanceBranch) -> str:
    text = params.to_json() + str(branch)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _check_branch(branch: ResonanceBranch):
    if branch.kind == "single":
        raise ConfigurationError("correlations are defined for the detuning and sum branches")


def _stable_lambda(params: ModeParams, branch: ResonanceBranch) -> complex:
    _check_branch(branch)
    if params.gamma <= 0:
        raise DivergenceError("stationary correlations need gamma > 0")
    m = dynamical_matrix(params, branch)
    lam = complex(np.sqrt(m[0, 0] ** 2 + m[0, 1] * m[1, 0]))
    if abs(lam.imag) >= params.gamma:
        raise DivergenceError(
            f"unstable: |Im Lambda| = {abs(lam.imag):.6g} >= gamma = {params.gamma:.6g}")
    return lam


def _correlation_quad(params: ModeParams, branch: ResonanceBranch, tau: float) -> np.ndarray:
    lam = _stable_lambda(params, branch)
    gamma = params.gamma
    n = params.occupations
    lag = abs(tau)
    upper = TAIL / (gamma - abs(lam.imag))

    def integrand(s):
        # element [j, j'] of exp(-gamma s) conj(U(s)) N U(s + lag)^T
        u0 = damped_evolution_matrix(params, branch, s, 0.5 * gamma)
        u1 = damped_evolution_matrix(params, branch, s, 0.5 * gamma, shift=lag)
        c = np.conj(u0) @ np.diag(n) @ u1.T
        return np.concatenate([c.real.ravel(), c.imag.ravel()])

    scale = float(n.sum())
    val, err = integrate.quad_vec(integrand, 0.0, upper, epsrel=QUAD_REL_TOL,
                                  epsabs=1e-14 * scale / gamma, limit=4000)
    if not np.all(np.isfinite(val)):
        raise NumericalError("correlation quadrature did not converge")
    c = (val[:4] + 1j * val[4:]).reshape(2, 2)
    c = gamma * np.exp(-0.5 * gamma * lag) * c
    # negative lag: C(-tau) = C(tau)^dagger
    return c if tau >= 0 else np.conj(c.T)


def _projectors(params: ModeParams, branch: ResonanceBranch):
    m = dynamical_matrix(params, branch)
    lam = complex(np.sqrt(m[0, 0] ** 2 + m[0, 1] * m[1, 0]))
    eye = np.eye(2)
    return lam, (eye + m / lam) / 2, (eye - m / lam) / 2


def spectral_coefficients(params: ModeParams, branch: ResonanceBranch = DETUNING):
    """(Lambda, P, Q) with C(tau) = e^{-gamma tau/2}(P e^{i L tau/2} + Q e^{-i L tau/2}), tau >= 0.

    Exact for a diagonalizable branch matrix; raises ``NumericalError`` at an
    exceptional point.
    """
    _stable_lambda(params, branch)
    if _is_exceptional(dynamical_matrix(params, branch)):
        raise NumericalError("spectral form undefined at an exceptional point")
    lam, ep, em = _projectors(params, branch)
    gamma = params.gamma
    nd = np.diag(params.occupations)
    lr, li = lam.real, lam.imag
    p = gamma * (np.conj(ep) @ nd @ ep.T / (gamma + li)
                 + np.conj(em) @ nd @ ep.T / (gamma - 1j * lr))
    q = gamma * (np.conj(ep) @ nd @ em.T / (gamma + 1j * lr)
                 + np.conj(em) @ nd @ em.T / (gamma - li))
    return lam, p, q


def _correlation_spectral(params, branch, tau) -> np.ndarray:
    lam, p, q = spectral_coefficients(params, branch)
    tau = np.asarray(tau, dtype=float)
    t = np.abs(tau)[..., None, None]
    env = np.exp(-0.5 * params.gamma * t)
    c = env * (p * np.exp(0.5j * lam * t) + q * np.exp(-0.5j * lam * t))
    neg = (tau < 0)[..., None, None]
    return np.where(neg, np.conj(np.swapaxes(c, -1, -2)), c)


def g1_matrix(params: ModeParams, tau, branch: ResonanceBranch = DETUNING,
              method: str = "quadrature") -> np.ndarray:
    """All four first-order correlations <v_j*(t) v_j'(t + tau)>.

    Returns shape ``tau.shape + (2, 2)``.  ``method="spectral"`` uses the exact
    eigen-projector form instead of quadrature (much faster); at an exceptional
    point it falls back to quadrature.
    """
    tau_arr = np.asarray(tau, dtype=float)
    if method == "spectral" and _is_exceptional(dynamical_matrix(params, branch)):
        method = "quadrature"
    if method == "spectral":
        return _correlation_spectral(params, branch, tau_arr)
    if method != "quadrature":
        raise ValueError(f"unknown method {method!r}")
    flat = tau_arr.ravel()
    out = np.array([_correlation_quad(params, branch, float(t)) for t in flat])
    return out.reshape(tau_arr.shape + (2, 2))


def g1(params: ModeParams, j: int, jp: int, tau, branch: ResonanceBranch = DETUNING,
       method: str = "quadrature"):
    """First-order correlation <v_j*(t) v_j'(t + tau)> in occupation units."""
    if j not in (1, 2) or jp not in (1, 2):
        raise ValueError("mode indices must be 1 or 2")
    out = g1_matrix(params, tau, branch, method)[..., j - 1, jp - 1]
    return out if np.ndim(tau) else complex(out)


def _arctanh_ratio(num, den):
    """arctanh(num/den) without forming the ratio.

    Stays finite at den = 0 (symmetric parameters), where the limit is
    i*pi/2.  Differs from the principal arctanh by multiples of i*pi, which
    only flips the sign of the cosine and is resolved by the probe.
    """
    return 0.5 * np.log((den + num) / (den - num))


def _closed_form_coefficients(params: ModeParams):
    """A and B of the g1_12 closed form for both signs of tau."""
    lam = _stable_lambda(params, DETUNING)
    gamma, n1, n2 = params.gamma, params.n1, params.n2
    delta = DETUNING.effective_detuning(params)
    gt = params.g * np.exp(1j * params.phase)
    lr, li = lam.real, lam.imag
    e, em = np.exp(1j * params.kd), np.exp(-1j * params.kd)
    e2 = e * e
    with np.errstate(all="ignore"):
        f1 = ((n1 * (2j * gamma - delta + lam) * em + n2 * (lam + delta) * e)
              / (4j * lam * (gamma + li) * (gamma - 1j * lr)))
        f2 = ((n1 * (-(2j * gamma - delta) + lam) * em + n2 * (lam - delta) * e)
              / (4j * lam * (gamma - li) * (gamma + 1j * lr)))
        a_pos = 2 * gamma * np.conj(gt) * np.sqrt(f1 * f2)
        num = (2 * gamma**3 * n1 - 2j * gamma * li * lr * n1
               + delta * (1j * gamma**2 + li * lr) * (n1 - e2 * n2)
               + gamma * lam**2 * (n1 + e2 * n2))
        den = (delta * gamma * lam * (n1 - e2 * n2) + lam * li * lr * (n1 + e2 * n2)
               - 1j * gamma**2 * lam * (n1 - e2 * n2))
        b_pos = -1j * _arctanh_ratio(num, den)

        lc = np.conj(lam)
        h1 = ((n2 * (2j * gamma - delta + lc) * e + n1 * (lc + delta) * em)
              / (4j * lc * (gamma - li) * (gamma - 1j * lr)))
        h2 = ((n2 * (-(2j * gamma - delta) + lc) * e + n1 * (lc - delta) * em)
              / (4j * lc * (gamma + li) * (gamma + 1j * lr)))
        a_neg = 2 * gamma * np.conj(gt) * np.sqrt(h1 * h2)
        num = ((gamma**2 + 1j * li * lr) * (-1j * delta * n1 + e2 * (1j * delta + 2 * gamma) * n2)
               + gamma * lc**2 * (n1 + e2 * n2))
        den = (delta * gamma * lc * n1 + 1j * lc * e2 * gamma * (1j * delta + 2 * gamma) * n2
               + (-1j * gamma**2 + li * lr) * (n1 + e2 * n2) * lc)
        b_neg = 1j * _arctanh_ratio(num, den)
    return lam, (complex(a_pos), complex(a_neg)), (complex(b_pos), complex(b_neg))


def _closed_form_value(lam, a, b, gamma, tau):
    # tau < 0 uses conj(Lambda) and |tau|
    t = np.abs(tau)
    lam_eff = np.where(tau >= 0, lam, np.conj(lam))
    a_eff = np.where(tau >= 0, a[0], a[1])
    b_eff = np.where(tau >= 0, b[0], b[1])
    return np.exp(-0.5 * gamma * t) * a_eff * np.cos(0.5 * lam_eff * t - b_eff)


def g1_closed_form_12(params: ModeParams, tau, probe: float | None = None) -> ClosedFormResult:
    """Printed closed form A cos(Lambda tau/2 - B) e^{-gamma|tau|/2} for g1_12.

    Detuning branch only.  The square root in A and the arctanh in B are
    taken on their principal branches; the resulting overall sign (the only
    ambiguity, since an i*pi shift of arctanh flips the cosine) is fixed for
    each sign of tau by comparison with quadrature at the lag ``+-probe``
    (default 1/gamma).  For tau < 0 the cosine argument is
    conj(Lambda)|tau|/2.
    """
    if _is_exceptional(dynamical_matrix(params, DETUNING)):
        raise NumericalError("the closed form is singular at an exceptional point")
    lam, a, b = _closed_form_coefficients(params)
    gamma = params.gamma
    probe = 1.0 / gamma if probe is None else abs(probe)
    signed_a, devs = [], []
    for k, lag in enumerate((probe, -probe)):
        ref = g1(params, 1, 2, lag)
        scale = abs(ref) + 1e-12 * (params.n1 + params.n2)
        trial = _closed_form_value(lam, (a[0], a[1]), b, gamma, np.array(lag))
        best = min((1.0, -1.0), key=lambda s: abs(s * trial - ref))
        signed_a.append(best * a[k])
        devs.append(float(abs(best * trial - ref) / scale))
    tau = np.asarray(tau, dtype=float)
    a_res = (signed_a[0], signed_a[1])
    values = _closed_form_value(lam, a_res, b, gamma, tau)
    flagged = (not np.all(np.isfinite(values))) or max(devs) > CLOSED_FORM_FLAG_TOL
    return ClosedFormResult(tau, values, a_res, b, (devs[0], devs[1]), bool(flagged))


def variance_sum_closed_form(params: ModeParams) -> float:
    """Printed expression for <|b1|^2> + <|b2|^2> on the detuning branch."""
    lam = _stable_lambda(params, DETUNING)
    gamma, g, n1, n2 = params.gamma, params.g, params.n1, params.n2
    delta = DETUNING.effective_detuning(params)
    lr, li = lam.real, lam.imag
    num = (2 * gamma * delta * lr * li * (n1 - n2)
           + gamma**2 * (n1 + n2) * (2 * gamma**2 + lr**2 - li**2 + delta**2 + g**2))
    return float(num / (2 * (gamma**2 - li**2) * (gamma**2 + lr**2)))


def stationary_variances(params: ModeParams, branch: ResonanceBranch = DETUNING,
                         check_tol: float = 1e-6) -> StationaryVariances:
    """Variances of the collective quadratures (v1 -+ v2)/sqrt(2).

    z_plus = (C11 + C22)/2 - Re C12 and z_minus = (C11 + C22)/2 + Re C12 at
    zero lag.  On the detuning branch the sum is cross-checked against its
    closed form and a mismatch beyond ``check_tol`` raises ``NumericalError``.
    """
    c = g1_matrix(params, 0.0, branch)
    total = float((c[0, 0] + c[1, 1]).real)
    cross = float(c[0, 1].real)
    closed = None
    if branch.kind == "detuning":
        closed = variance_sum_closed_form(params)
        if abs(closed - total) > check_tol * abs(total):
            raise NumericalError(f"variance sum mismatch: quadrature {total}, closed form {closed}")
    return StationaryVariances(0.5 * total - cross, 0.5 * total + cross, total, closed,
                              0.5 * (params.n1 + params.n2))


def squeezing_gain(sigma_plus: float, sigma_minus: float, g: float | None = None,
                   gamma: float | None = None, rel_tol: float = 0.2) -> GainEstimate:
    """Gain r from normalized variances sigma_+ = 1/(1+r), sigma_- = 1/(1-r).

    The two relations are linear in r after inversion (1/sigma_+ - 1 = r,
    1 - 1/sigma_- = r); r is their least-squares solution, i.e. the mean.
    ``consistent`` is False when the two single-equation estimates differ by
    more than ``rel_tol`` of r.  ``r_max = g/gamma`` if both are given.
    """
    if sigma_plus <= 0 or sigma_minus <= 0:
        raise ValueError("variances must be positive")
    if not sigma_plus <= 1 <= sigma_minus:
        raise ValueError("need sigma_plus <= 1 <= sigma_minus")
    r_plus = 1.0 / sigma_plus - 1.0
    r_minus = 1.0 - 1.0 / sigma_minus
    r = 0.5 * (r_plus + r_minus)
    consistent = abs(r_plus - r_minus) <= rel_tol * abs(r) if r != 0 else r_plus == r_minus
    r_max = None if g is None or gamma is None else g / gamma
    return GainEstimate(r, r_plus, r_minus, bool(consistent), float(10 * np.log10(sigma_plus)),
                        r_max)


def g2(params: ModeParams, tau, j: int = 1, jp: int = 2, branch: ResonanceBranch = DETUNING,
       method: str = "spectral"):
    """Second-order correlation <|v_j(t)|^2 |v_j'(t + tau)|^2> for Gaussian modes.

    g2 = C_jj(0) C_j'j'(0) + |C_jj'(tau)|^2.  The default spectral evaluation
    falls back to quadrature at an exceptional point.
    """
    if method == "spectral" and _is_exceptional(dynamical_matrix(params, branch)):
        method = "quadrature"
    c0 = g1_matrix(params, 0.0, branch, method)
    ct = g1_matrix(params, tau, branch, method)[..., j - 1, jp - 1]
    out = (c0[j - 1, j - 1] * c0[jp - 1, jp - 1]).real + np.abs(ct) ** 2
    return out if np.ndim(tau) else float(out)


def g2_phase_offsets(params: ModeParams, branch: ResonanceBranch = DETUNING):
    """Cosine phases (psi_+, psi_-, mean) of the oscillating part of |g1_12|^2.

    For tau >= 0 the oscillation is cos(Lambda' tau - psi_+), for tau < 0
    cos(Lambda' tau - psi_-); ``mean`` is their circular mean.
    """
    _, p, q = spectral_coefficients(params, branch)
    psi_pos = -np.angle(p[0, 1] * np.conj(q[0, 1]))
    psi_neg = np.angle(p[1, 0] * np.conj(q[1, 0]))
    mean = np.angle(np.exp(1j * psi_pos) + np.exp(1j * psi_neg))
    return float(psi_pos), float(psi_neg), float(mean)


def _sign_of_delta(params: ModeParams, branch: ResonanceBranch) -> float:
    _check_branch(branch)
    delta = branch.effective_detuning(params)
    if abs(delta) <= params.g:
        raise ValueError("the phase law needs |delta| > g")
    return float(np.sign(delta))


def gbar_prime(params: ModeParams, branch: ResonanceBranch = DETUNING) -> float:
    """Mean g2 cosine phase predicted by the linear law in kd.

    -sgn(delta)(2 kd - pi) on the detuning branch, -sgn(delta) 2 kd on the sum
    branch.  Not wrapped.
    """
    sign = _sign_of_delta(params, branch)
    if branch.kind == "detuning":
        return -sign * (2 * params.kd - np.pi)
    return -sign * 2 * params.kd


def kd_from_phase(phase: float, branch: ResonanceBranch, sign: float) -> float:
    """Invert :func:`gbar_prime`; kd is returned in [0, pi)."""
    _check_branch(branch)
    if sign == 0:
        raise ValueError("sign of delta must be non-zero")
    s = float(np.sign(sign))
    if branch.kind == "detuning":
        kd = 0.5 * (np.pi - s * phase)
    else:
        kd = -0.5 * s * phase
    return float(np.mod(kd, np.pi))


def correlation_series(params: ModeParams, tau, kind: str = "g1", j: int = 1, jp: int = 2,
                       branch: ResonanceBranch = DETUNING,
                       method: str = "spectral") -> CorrelationSeries:
    """Sample g1_jj' or g2_jj' on a lag grid."""
    tau = np.asarray(tau, dtype=float)
    if kind == "g1":
        values = g1(params, j, jp, tau, branch, method)
    elif kind == "g2":
        values = g2(params, tau, j, jp, branch, method)
    else:
        raise ValueError("kind must be 'g1' or 'g2'")
    return CorrelationSeries(tau, np.asarray(values), kind, branch, params_hash(params, branch))


__all__ = ["CorrelationSeries", "ClosedFormResult", "StationaryVariances", "GainEstimate",
           "g1", "g1_matrix", "g1_closed_form_12", "spectral_coefficients",
           "variance_sum_closed_form", "stationary_variances", "squeezing_gain", "g2",
           "g2_phase_offsets", "gbar_prime", "kd_from_phase", "correlation_series", "SUM"]
