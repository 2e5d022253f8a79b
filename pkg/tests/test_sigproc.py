import warnings

import numpy as np
import pytest
from scipy.linalg import expm, solve_continuous_lyapunov

from fblab import DETUNING, ConfigurationError, ModeParams
from fblab.correlations import g1_matrix, g2, g2_phase_offsets
from fblab.frames import ComplexAmplitudeSeries, to_branch_frame
from fblab.langevin import simulate, to_complex_amplitudes
from fblab.rwa import dynamical_matrix
from fblab.sigproc import (PhaseLockWarning, SimSettings, StatisticalPowerError, analytic_signal,
                           bandpass, branch_frame_from_records, breit_wigner_fit, demodulate,
                           double_breit_wigner_fit, eigenmode_splitting, empirical_g1, empirical_g2,
                           filtered_g2_fit, G2Series, g2_band, lorentzian, phase_lock_histogram,
                           reconstruct_eigenmodes, spectrogram_scan, welch_psd)

TWO_PI = 2 * np.pi


# ---------------------------------------------------------------- analytic signal

def test_analytic_signal_of_tones():
    n = 2**16
    t = np.arange(n) * 1e-5
    w = TWO_PI * 3456.7
    keep = slice(int(np.ceil(0.05 * n)), n - int(np.ceil(0.05 * n)))
    z = analytic_signal(np.cos(w * t))
    assert np.max(np.abs(np.abs(z[keep]) - 1)) < 1e-3
    np.testing.assert_allclose(z[keep], np.exp(1j * w * t[keep]), atol=1e-3)
    zs = analytic_signal(np.sin(w * t))
    np.testing.assert_allclose(zs[keep], -1j * np.exp(1j * w * t[keep]), atol=1e-3)
    x = np.random.default_rng(0).standard_normal(500)
    assert np.array_equal(analytic_signal(x).real, x)
    with pytest.raises(ConfigurationError):
        analytic_signal(np.ones(10))


def test_demodulation():
    dt = 1e-5
    t = dt * np.arange(1000)
    w = TWO_PI * 2e3
    s = ComplexAmplitudeSeries(np.exp(1j * w * t), dt)
    assert demodulate(s, 0.0, 1) is s
    np.testing.assert_allclose(demodulate(s, 2e3, -1).values, 1.0, atol=1e-10)
    x = ComplexAmplitudeSeries(np.random.default_rng(1).standard_normal(1000) + 0j, dt)
    back = demodulate(demodulate(x, 3.3e3, 1), 3.3e3, -1)
    np.testing.assert_allclose(back.values, x.values, atol=1e-12)
    with pytest.raises(ConfigurationError):
        demodulate(x, 6e4, 1)


# ---------------------------------------------------------------- spectra

def test_welch_white_noise_level_and_parseval():
    rng = np.random.default_rng(2)
    sigma, fs = 1.7, 1e4
    x = sigma * rng.standard_normal((8, 2**16))
    psd = welch_psd(x, 1024, fs=fs)
    assert np.mean(psd.density[1:-1]) == pytest.approx(sigma**2 / (fs / 2), rel=0.05)
    assert psd.power() == pytest.approx(np.mean(x**2), rel=0.02)
    c = x[:4] + 1j * x[4:]
    psd_c = welch_psd(c, 1024, fs=fs)
    assert psd_c.two_sided and psd_c.freqs[0] < 0
    assert psd_c.power() == pytest.approx(np.mean(np.abs(c) ** 2), rel=0.02)


def test_welch_tone_peak():
    fs, f0 = 1e4, 1234.5
    t = np.arange(2**15) / fs
    psd = welch_psd(np.cos(TWO_PI * f0 * t), 2048, fs=fs)
    assert abs(psd.freqs[np.argmax(psd.density)] - f0) <= psd.resolution
    with pytest.raises(ConfigurationError):
        welch_psd(np.ones(100), 200, fs=fs)


def _synthetic_psd(noise=0.0, seed=0):
    from fblab.sigproc import PsdEstimate

    f = np.linspace(-500, 500, 801)
    p = lorentzian(f, 37.0, 60.0, 900.0, 0.02)
    if noise:
        p = p * (1 + noise * np.random.default_rng(seed).standard_normal(f.size))
    return PsdEstimate(f, p, 1, "hann", True)


def test_breit_wigner_self_fit():
    fit = breit_wigner_fit(_synthetic_psd())
    assert fit.f0 == pytest.approx(37.0, rel=1e-6)
    assert fit.width == pytest.approx(60.0, rel=1e-6)
    noisy = breit_wigner_fit(_synthetic_psd(0.05, seed=4))
    assert noisy.f0 == pytest.approx(37.0, rel=0.02)
    assert noisy.width == pytest.approx(60.0, rel=0.02)


def test_uncoupled_linewidth():
    gamma = TWO_PI * 500.0
    p = ModeParams(TWO_PI * 30e3, TWO_PI * 34e3, gamma, 0.0, n1=1e4, n2=1e4)
    # n_traj * duration = 4 s, well above 200 / gamma
    e = simulate(p, duration=0.5, n_traj=8, seed=4, record_every=8)
    fs = 1 / e.sample_dt
    seg = int(fs / 10.0)
    fit = breit_wigner_fit(welch_psd(e.z[:, 0], seg, fs=fs), (28e3, 32e3))
    assert fit.width == pytest.approx(500.0, rel=0.1)
    assert fit.f0 == pytest.approx(30e3, abs=25.0)


def test_reciprocal_resonance_splits_by_g():
    gamma, g = TWO_PI * 300.0, TWO_PI * 1000.0
    p = ModeParams(TWO_PI * 27e3, TWO_PI * 33e3, gamma, g, n1=1e4, n2=1e4)
    p = p.replace(detuning=p.mech_detuning)
    e = simulate(p, duration=0.1, n_traj=8, seed=9, record_every=10)
    b1, b2 = branch_frame_from_records(e.z[:, 0], e.z[:, 1], e.sample_dt, p, DETUNING, e.mass)
    psd = welch_psd(b1, int(b1.sample_rate / 15.0))
    fit = double_breit_wigner_fit(psd, (-1500.0, 1500.0))
    assert fit.gap == pytest.approx(1000.0, rel=0.05)
    assert 0.5 * (fit.low.f0 + fit.high.f0) == pytest.approx(0.0, abs=50.0)


def test_spectrogram_without_coupling_tracks_bare_modes():
    p = ModeParams(TWO_PI * 27e3, TWO_PI * 33e3, TWO_PI * 570.0, 0.0, n1=1e4, n2=1e4)
    settings = SimSettings(0.25, n_traj=8, seed=3, record_every=10, burn_in=0.005)
    dws = p.mech_detuning + TWO_PI * np.array([-2000.0, 2000.0])
    scan = spectrogram_scan(p, dws, settings)
    res = 57.0
    for dw, ridge in zip(dws, scan.ridges):
        # particle 2 appears shifted down by the modulation frequency
        expected = sorted([27e3, 33e3 - dw / TWO_PI])
        np.testing.assert_allclose(ridge, expected, atol=res)


def test_spectrogram_anti_reciprocal_coalescence():
    gamma, g = TWO_PI * 570.0, TWO_PI * 400.0
    p = ModeParams(TWO_PI * 27e3, TWO_PI * 33e3, gamma, g, kd=np.pi / 2, n1=1e4, n2=1e4)
    settings = SimSettings(0.25, n_traj=32, seed=3, record_every=10, burn_in=0.005)
    dws = p.mech_detuning + TWO_PI * np.array([-200.0, 0.0])
    scan = spectrogram_scan(p, dws, settings)
    resolution = gamma / TWO_PI / 10
    assert np.all(scan.ridges[:, 1] - scan.ridges[:, 0] < resolution)


# ---------------------------------------------------------------- eigenmodes and phase locking

def _series(values, dt=1e-4):
    return ComplexAmplitudeSeries(np.asarray(values), dt)


def test_reconstruction_is_orthonormal():
    rng = np.random.default_rng(5)
    b1 = _series(rng.standard_normal((3, 512)) + 1j * rng.standard_normal((3, 512)))
    b2 = _series(0.4 * b1.values + rng.standard_normal((3, 512)) + 0j)
    for kd in (0.3, -0.3):
        em = reconstruct_eigenmodes(b1, b2, kd, locked=True)
        lhs = np.abs(em.plus.values) ** 2 + np.abs(em.minus.values) ** 2
        rhs = np.abs(b1.values) ** 2 + np.abs(b2.values) ** 2
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * rhs.max()
    a = reconstruct_eigenmodes(b1, b2, 0.3, locked=True)
    b = reconstruct_eigenmodes(b1, b2, -0.3, locked=True)
    np.testing.assert_allclose(a.plus.values, b.minus.values)


def test_uncoupled_reconstruction_warns():
    rng = np.random.default_rng(6)
    b1 = _series(rng.standard_normal((4, 4000)) + 1j * rng.standard_normal((4, 4000)))
    b2 = _series(rng.standard_normal((4, 4000)) + 1j * rng.standard_normal((4, 4000)))
    with pytest.warns(PhaseLockWarning):
        em = reconstruct_eigenmodes(b1, b2, 0.5)
    assert em.phase == 0.0 and not em.locked
    np.testing.assert_allclose(em.plus.values, (b1.values + b2.values) / np.sqrt(2))
    hist = phase_lock_histogram(b1, b2)
    assert hist.contrast < 3 * hist.noise * 2 and not hist.locked


def _settings_fig4():
    return SimSettings(0.25, n_traj=40, seed=17, record_every=40, burn_in=0.0035, resolution=12.0)


def _fig4_params(kd):
    p = ModeParams(TWO_PI * 27e3, TWO_PI * 33e3, TWO_PI * 466.0, TWO_PI * 276.0, phase=0.7,
                   kd=kd, n1=1e4, n2=1e4)
    return p.replace(detuning=p.mech_detuning)


def test_eigenmode_linewidths_follow_sin_kd():
    widths = {}
    for kd in (0.25 * np.pi, -0.25 * np.pi):
        res = eigenmode_splitting(_fig4_params(kd), _settings_fig4())
        assert res.locked
        widths[kd] = (res.plus.width, res.minus.width)
        # linewidth pair gamma -+ g sin(kd) within 15%
        gam, g = 466.0, 276.0
        assert res.plus.width == pytest.approx(gam - g * np.sin(kd), rel=0.15)
        assert res.minus.width == pytest.approx(gam + g * np.sin(kd), rel=0.15)
    pos, neg = widths[0.25 * np.pi], widths[-0.25 * np.pi]
    assert pos[0] < pos[1] and neg[0] > neg[1]


def _squash_frame(g_ratio, n_traj=50, seed=2):
    gamma = TWO_PI * 473.0
    p = ModeParams(TWO_PI * 30e3, TWO_PI * 34.5e3, gamma, g_ratio * gamma, kd=np.pi / 2,
                   n1=1e4, n2=1e4)
    p = p.replace(detuning=p.mech_detuning)
    e = simulate(p, duration=0.02 + 10 / gamma, n_traj=n_traj, seed=seed, record_every=20)
    a1, a2 = to_complex_amplitudes(e)
    i0 = int(round(10 / gamma / e.sample_dt))
    return to_branch_frame(a1.slice(i0), a2.slice(i0), p, DETUNING)


def test_phase_locking_grows_with_coupling():
    contrasts = []
    for r in (0.0, 0.25, 0.5, 0.75):
        b1, b2 = _squash_frame(r)
        hist = phase_lock_histogram(b1, b2)
        contrasts.append(hist.contrast)
        assert hist.locked == (r > 0)
        if r == 0:
            assert hist.contrast < 3 * hist.noise * 2
    assert np.all(np.diff(contrasts) > 0)


def test_empirical_g1_lag_convention():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 4096)) + 1j * rng.standard_normal((2, 4096))
    b1 = _series(x)
    b2 = _series(np.roll(x, 5, axis=-1))
    tau, vals = empirical_g1(b1, b2, 10e-4)
    assert tau[np.argmax(np.abs(vals))] == pytest.approx(5e-4)


# ---------------------------------------------------------------- g2

def _surrogate(params, dt, n, n_rec, seed):
    """Exact discretization of the stationary rotating-frame process."""
    a = 0.5j * dynamical_matrix(params) - 0.5 * params.gamma * np.eye(2)
    s = solve_continuous_lyapunov(a, -params.gamma * np.diag(params.occupations))
    phi = expm(a * dt)
    chol_q = np.linalg.cholesky(s - phi @ s @ phi.conj().T)
    rng = np.random.default_rng(seed)

    def cnormal(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    v = np.empty((n_rec, 2, n), dtype=complex)
    v[:, :, 0] = cnormal(n_rec, 2) @ np.linalg.cholesky(s).T
    xi = cnormal(n_rec, 2, n)
    for k in range(1, n):
        v[:, :, k] = v[:, :, k - 1] @ phi.T + xi[:, :, k] @ chol_q.T
    return _series(v[:, 0], dt), _series(v[:, 1], dt)


def test_empirical_g2_converges_to_analytic():
    p = ModeParams(10.0, 12.0, 1.0, 0.6, kd=0.7, n1=1.0, n2=2.0)
    p = p.replace(detuning=p.mech_detuning + 3.0)
    c0 = g1_matrix(p, 0.0)
    norm = (c0[0, 0] * c0[1, 1]).real
    spread = []
    for n in (4000, 16000):
        a1, a2 = _surrogate(p, 0.05, n, 40, seed=n)
        s = empirical_g2(a1, a2, 6.0)
        ref = (g2(p, s.tau) - norm) / norm
        assert np.all(np.abs(s.values - ref) < 3 * s.stderr)
        spread.append(np.median(s.stderr))
    assert spread[1] / spread[0] == pytest.approx(0.5, rel=0.25)


def test_empirical_g2_uncoupled_is_zero():
    p = ModeParams(10.0, 12.0, 1.0, 0.0, n1=1.0, n2=2.0)
    a1, a2 = _surrogate(p, 0.05, 8000, 40, seed=3)
    s = empirical_g2(a1, a2, 6.0)
    assert np.all(np.abs(s.values) < 3 * s.stderr)
    with pytest.raises(StatisticalPowerError):
        empirical_g2(a1.slice(0, 100), a2.slice(0, 100), 6.0)


def test_bandpass_is_zero_phase():
    dt = 1e-4
    t = dt * np.arange(20000)
    x = np.cos(TWO_PI * 500.0 * t + 0.4)
    y = bandpass(x, dt, (300.0, 800.0))
    mid = slice(5000, 15000)
    z = np.sum(y[mid] * np.exp(-1j * TWO_PI * 500.0 * t[mid]))
    assert abs(np.angle(z) - 0.4) < 1e-3
    lo, hi = g2_band(TWO_PI * 1000.0)
    assert lo == pytest.approx(1e3 * np.sqrt(0.41)) and hi == pytest.approx(1e3 * np.sqrt(1.75))
    with pytest.raises(ConfigurationError):
        bandpass(x, dt, (300.0, 6000.0))


def test_filtered_fit_recovers_analytic_phases():
    gamma = TWO_PI * 125.0
    p = ModeParams(TWO_PI * 8e3, TWO_PI * 10e3, gamma, TWO_PI * 250.0, kd=0.35 * np.pi,
                   n1=1.0, n2=1.0)
    p = p.replace(detuning=p.mech_detuning + TWO_PI * 1510.0)
    dt = 1e-5
    tau = dt * np.arange(-6000, 6001)
    c0 = g1_matrix(p, 0.0, method="spectral")
    norm = (c0[0, 0] * c0[1, 1]).real
    series = G2Series(tau, (g2(p, tau) - norm) / norm, np.zeros_like(tau), 1)
    fit = filtered_g2_fit(series, DETUNING.effective_detuning(p), gamma=gamma)
    expected = g2_phase_offsets(p)
    assert abs(np.angle(np.exp(1j * (fit.phase_mean - expected[2])))) < 0.02 * np.pi
