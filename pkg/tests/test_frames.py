import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fblab import DETUNING, SUM, ModeParams, single_mode
from fblab.frames import (ComplexAmplitudeSeries, branch_rotations, slow_amplitude,
                          to_branch_frame)


@settings(max_examples=100, deadline=None)
@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(-np.pi, np.pi), st.booleans(),
       st.floats(0, 1.0))
def test_frame_operations_invert(w1, w2, phase, conj, t0):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    s = ComplexAmplitudeSeries(u, 1e-4, t0)
    out = s.rotate(w1).shift_phase(phase)
    if conj:
        out = out.conj()
    out = out.rotate(w2).slice(3, 50)
    np.testing.assert_allclose(out.to_lab(), u[3:50], atol=1e-12)


def test_slow_amplitude_of_free_oscillation():
    w, dt = 2 * np.pi * 1e3, 1e-5
    t = dt * np.arange(100)
    lab = ComplexAmplitudeSeries(0.7 * np.exp(1j * (w * t + 0.3)), dt)
    a = slow_amplitude(lab, w)
    np.testing.assert_allclose(a.values, 0.7 * np.exp(-0.3j), atol=1e-12)
    with pytest.raises(ValueError):
        slow_amplitude(a, w)
    with pytest.raises(ValueError):
        ComplexAmplitudeSeries(np.zeros(3), 0.0)


def test_branch_frames():
    p = ModeParams(10.0, 13.0, 0.1, 0.2, detuning=5.0)
    assert branch_rotations(p, DETUNING) == (-1.0, 1.0)
    sigma = SUM.effective_detuning(p)
    assert branch_rotations(p, SUM) == (0.5 * sigma, -0.5 * sigma)
    dt = 0.01
    ones = ComplexAmplitudeSeries(np.ones(10, dtype=complex), dt)
    v1, v2 = to_branch_frame(ones, ones, p, SUM)
    t = dt * np.arange(10)
    np.testing.assert_allclose(v1.values, np.exp(0.5j * sigma * t))
    np.testing.assert_allclose(v2.values, np.exp(-0.5j * sigma * t))
    b, bc = to_branch_frame(ones, ones, p, single_mode(2))
    np.testing.assert_allclose(bc.values, np.conj(b.values))
