import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fblab import ModeParams, PhysicalConfig, reduce
from fblab.model import (DETUNING, EPS0, HBAR, K_B, SUM, ConfigurationError, DomainError,
                         ResonanceBranch, field_product_for_coupling, single_mode,
                         zero_point_length)

TWO_PI = 2 * np.pi


def test_polarizability_recomputes():
    c = PhysicalConfig()
    v = 4 / 3 * math.pi * c.radius**3
    expected = 3 * EPS0 * v * (c.permittivity - 1) / (c.permittivity + 2)
    assert c.polarizability == pytest.approx(expected, rel=1e-15)
    assert 0 < c.modified_wavenumber < c.wavenumber


@pytest.mark.parametrize("field,value", [("radius", 0.0), ("distance", -1e-6),
                                         ("temperature", 0.0), ("field1", float("nan"))])
def test_physical_config_rejects_nonpositive(field, value):
    with pytest.raises(ConfigurationError):
        PhysicalConfig(**{field: value})


def test_short_rayleigh_length_makes_k_prime_negative():
    with pytest.raises(ConfigurationError):
        PhysicalConfig(rayleigh_length=1e-8)


def test_mode_params_invariants():
    with pytest.raises(ConfigurationError):
        ModeParams(-1.0, 1.0, 0.1, 0.1)
    with pytest.raises(ConfigurationError):
        ModeParams(1.0, 1.0, -0.1, 0.1)
    with pytest.raises(ConfigurationError):
        ModeParams(1.0, 1.0, 0.1, 0.1, n1=0.0)
    p = ModeParams.from_temperature(TWO_PI * 27e3, TWO_PI * 33e3, 1.0, 1.0, 293.0)
    assert p.n1 == pytest.approx(K_B * 293.0 / (HBAR * TWO_PI * 27e3), rel=1e-15)
    assert p.mech_detuning == pytest.approx(TWO_PI * 6e3)
    assert p.omega_mean == pytest.approx(TWO_PI * 30e3)


def test_branch_effective_detuning():
    p = ModeParams(10.0, 13.0, 0.1, 0.2, detuning=4.0)
    assert DETUNING.effective_detuning(p) == pytest.approx(4.0 - 3.0)
    assert SUM.effective_detuning(p) == pytest.approx(4.0 - 23.0)
    assert single_mode(1).effective_detuning(p) == pytest.approx(4.0 - 20.0)
    assert single_mode(2).effective_detuning(p) == pytest.approx(4.0 - 26.0)
    for b in (DETUNING, SUM, single_mode(1), single_mode(2)):
        assert b.effective_detuning(p.replace(detuning=b.resonant_detuning(p))) == pytest.approx(0.0)
        assert ResonanceBranch.parse(str(b)) == b
    with pytest.raises(ConfigurationError):
        ResonanceBranch.parse("diagonal")


def test_reduce_trivial_scalings():
    c = PhysicalConfig()
    w1, w2 = TWO_PI * 27e3, TWO_PI * 33e3
    assert reduce(PhysicalConfig(polarization_angle=0.0), w1, w2).g == pytest.approx(0.0, abs=1e-20)
    g = reduce(c, w1, w2).g
    assert reduce(PhysicalConfig(distance=2 * c.distance), w1, w2).g == pytest.approx(g / 2, rel=1e-14)
    s = 1.7
    scaled = PhysicalConfig(field1=s * c.field1, field2=s * c.field2)
    assert reduce(scaled, w1, w2).g == pytest.approx(s**2 * g, rel=1e-14)


def test_reduce_round_trip_to_target_coupling():
    w1, w2 = TWO_PI * 50e3, TWO_PI * 70e3
    c = PhysicalConfig()
    target = TWO_PI * 724.0
    e = math.sqrt(field_product_for_coupling(c, target, w1, w2))
    p = reduce(PhysicalConfig(field1=e, field2=e, phase1=0.2, phase2=0.9), w1, w2)
    assert p.g == pytest.approx(target, rel=1e-9)
    assert p.phase == pytest.approx(0.7)
    assert p.kd == pytest.approx(c.wavenumber * c.distance)


def test_reduce_domain_error():
    with pytest.raises(ConfigurationError):
        reduce(PhysicalConfig(), 0.0, 1.0)
    with pytest.raises(DomainError):
        reduce(PhysicalConfig(field1=1e300, field2=1e300), 1.0, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6), st.floats(0, 1e4), st.floats(0, 1e4),
       st.floats(-1e5, 1e5), st.floats(-10, 10), st.floats(-10, 10), st.floats(1e-3, 1e9))
def test_mode_params_serialization_round_trip(w1, w2, gamma, g, dw, phase, kd, n):
    p = ModeParams(w1, w2, gamma, g, dw, phase, kd, n, 2 * n)
    assert ModeParams.from_json(p.to_json()) == p


def test_zero_point_length():
    m, w = 1e-17, TWO_PI * 30e3
    assert zero_point_length(m, w) == pytest.approx(math.sqrt(HBAR / (2 * m * w)))
