import numpy as np
import pytest
from scipy.integrate import quad

from fblab import ModeParams, PhysicalConfig, reduce
from fblab.binding import directional_rates, full_force, interference_phase, linearized_force

TWO_PI = 2 * np.pi
W1, W2 = TWO_PI * 27e3, TWO_PI * 33e3


def test_interference_phase_examples():
    p = ModeParams(1.0, 1.0, 0.0, 1.0)
    assert interference_phase(p, 1, 3.7) == 0.0
    q = ModeParams(1.0, 1.0, 0.0, 1.0, detuning=TWO_PI, kd=np.pi)
    assert interference_phase(q, 2, 0.25) == pytest.approx(np.pi + np.pi / 2)
    r = ModeParams(1.0, 1.0, 0.0, 1.0, detuning=17.0, phase=0.4, kd=1.3)
    t = np.linspace(0, 5, 101)
    np.testing.assert_allclose(interference_phase(r, 1, t) + interference_phase(r, 2, t), 2.6)
    with pytest.raises(ValueError):
        interference_phase(r, 3, 0.0)


def _config_with_phase(phi1):
    """Config whose particle-1 interference phase is ``phi1`` at t = 0."""
    base = PhysicalConfig(optical_detuning=0.0)
    return PhysicalConfig(optical_detuning=0.0, phase1=base.kd - phi1, phase2=0.0)


def test_full_force_zero_and_prefactor():
    # kd = 4 pi with zero phases puts phi_1 on a multiple of 2 pi
    c = PhysicalConfig(distance=4 * np.pi / PhysicalConfig().wavenumber, optical_detuning=0.0)
    f = full_force(c, 0.0, 0.0, 0.0)
    assert abs(f.f1) < 1e-12 * c.binding_prefactor()
    c2 = _config_with_phase(np.pi / 2)
    f2 = full_force(c2, 0.0, 0.0, 0.0)
    assert f2.f1 == pytest.approx(c2.binding_prefactor(), rel=1e-12)


@pytest.mark.parametrize("phi", [0.0, 0.6, 2.5])
def test_full_force_gradient_matches_coupling(phi):
    c = _config_with_phase(phi)
    p = reduce(c, W1, W2)
    h = c.wavelength * 1e-6
    deriv = (full_force(c, 0.0, h, 0.0).f1 - full_force(c, 0.0, -h, 0.0).f1) / (2 * h)
    expected = 2 * c.mass * np.sqrt(W1 * W2) * p.g * np.cos(interference_phase(p, 1, 0.0))
    assert deriv == pytest.approx(expected, rel=1e-6)


def test_linearized_force_trivial_cases():
    p = ModeParams(W1, W2, 1.0, 0.0)
    f = linearized_force(p, 1e-17, 1e-9, -1e-9, 0.0, 1e7)
    assert f.f1 == 0.0 and f.f2 == 0.0
    q = ModeParams(W1, W2, 1.0, 5.0, phase=-np.pi / 2)  # phi_1 = pi/2
    f = linearized_force(q, 1e-17, 1e-9, -1e-9, 0.0, 1e7)
    assert abs(f.coupling1) < 1e-12 * abs(f.drive1)
    assert f.drive1 == pytest.approx(2 * 5.0 * 1e-17 * np.sqrt(W1 * W2) / 1e7)


@pytest.mark.parametrize("phi", [0.4, 1.1, 2.0, -2.3])
def test_linearized_matches_full_force(phi):
    c = _config_with_phase(phi)
    p = reduce(c, W1, W2)
    kp = c.modified_wavenumber
    dz = 1e-3 / kp
    t = np.array([0.0])
    full = full_force(c, 0.3 * dz, 1.3 * dz, t)
    lin = linearized_force(p, c.mass, 0.3 * dz, 1.3 * dz, t, kp)
    np.testing.assert_allclose(lin.f1, full.f1, rtol=1e-5)
    np.testing.assert_allclose(lin.f2, full.f2, rtol=1e-5)


def test_directional_rates_reciprocity():
    t = np.linspace(0, 0.01, 257)
    for n in (-1, 0, 2):
        p = ModeParams(1.0, 1.0, 0.0, 3.0, detuning=1e3, phase=0.3, kd=n * np.pi)
        g12, g21 = directional_rates(p, t)
        np.testing.assert_allclose(g12, g21, atol=1e-12)
    p = ModeParams(1.0, 1.0, 0.0, 3.0, detuning=1e3, phase=0.3, kd=np.pi / 2)
    g12, g21 = directional_rates(p, t)
    np.testing.assert_allclose(g12, -g21, atol=1e-12)
    g12, g21 = directional_rates(ModeParams(1.0, 1.0, 0.0, 3.0, kd=np.pi / 4), 0.0)
    assert g12 == pytest.approx(3.0) and g21 == pytest.approx(0.0, abs=1e-14)


def test_rates_bounded_and_average_to_zero(rng):
    for _ in range(20):
        p = ModeParams(1.0, 1.0, 0.0, rng.uniform(0, 5), detuning=rng.uniform(1, 100),
                       phase=rng.uniform(-3, 3), kd=rng.uniform(-3, 3))
        t = rng.uniform(0, 10, 200)
        for rate in directional_rates(p, t):
            assert np.all(np.abs(rate) <= p.g * (1 + 1e-15))
        period = TWO_PI / p.detuning
        for j in (1, 2):
            avg = quad(lambda s: np.cos(interference_phase(p, j, s)), 0, period,
                       epsabs=1e-14, epsrel=1e-13)[0] / period
            assert abs(avg) < 1e-9


def test_full_force_is_periodic():
    c = PhysicalConfig(optical_detuning=TWO_PI * 20e3)
    period = TWO_PI / c.optical_detuning
    t = np.linspace(0, period, 33)
    a = full_force(c, 1e-9, -2e-9, t)
    b = full_force(c, 1e-9, -2e-9, t + 3 * period)
    np.testing.assert_allclose(a.f1, b.f1, atol=1e-9 * c.binding_prefactor())
    np.testing.assert_allclose(a.f2, b.f2, atol=1e-9 * c.binding_prefactor())
