import numpy as np
import pytest

from fblab import ModeParams

TWO_PI = 2 * np.pi


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_params(rng, stable_margin=0.9, branch_kind="detuning"):
    """Random dimensionless parameters (gamma = 1) that are stable on the branch."""
    from fblab.rwa import branch_lambda
    from fblab import DETUNING, SUM

    branch = DETUNING if branch_kind == "detuning" else SUM
    while True:
        p = ModeParams(10.0, 10.0 + rng.uniform(-3, 3), 1.0, rng.uniform(0.05, 1.5),
                       phase=rng.uniform(-np.pi, np.pi), kd=rng.uniform(-np.pi, np.pi),
                       n1=rng.uniform(0.5, 2.0), n2=rng.uniform(0.5, 2.0))
        res = branch.resonant_detuning(p)
        p = p.replace(detuning=res + rng.uniform(-2, 2))
        lam = branch_lambda(p, branch)
        if abs(lam.imag) < stable_margin * p.gamma and abs(lam) > 1e-3:
            return p


def squash_params(**kw):
    """Anti-reciprocal resonance with g/gamma = 0.753 and equal occupations."""
    gamma = TWO_PI * 473.0
    p = ModeParams(TWO_PI * 30e3, TWO_PI * 34.5e3, gamma, 0.753 * gamma, kd=np.pi / 2,
                   n1=1.0e6, n2=1.0e6)
    return p.replace(detuning=p.mech_detuning, **kw)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record and print a one-line verdict for an acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.setdefault(number, []).append((passed, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        for _, line in _ACCEPTANCE[number]:
            terminalreporter.write_line(line)
