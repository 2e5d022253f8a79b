"""First- and second-order cross-correlations and the g2 phase law.

Prints |g1_12(tau)| and the normalized g2 around zero lag, then the fitted g2
phase against the linear law in kd.
"""
import numpy as np

from fblab import ModeParams
from fblab.correlations import g1, g2, g2_phase_offsets, gbar_prime

TWO_PI = 2 * np.pi


def main():
    g = TWO_PI * 250.0
    base = ModeParams(TWO_PI * 8e3, TWO_PI * 10e3, TWO_PI * 125.0, g, n1=1.0, n2=1.0)
    p = base.replace(detuning=base.mech_detuning + 6 * g, kd=0.3 * np.pi)
    tau = np.linspace(-1e-3, 1e-3, 11)
    c11, c22 = g1(p, 1, 1, 0.0).real, g1(p, 2, 2, 0.0).real
    print("  tau (ms)   |g1_12|/sqrt(n1 n2)   g2 - 1")
    for t, a, b in zip(tau, np.abs(g1(p, 1, 2, tau)), g2(p, tau)):
        print(f"  {t * 1e3:8.2f} {a / np.sqrt(c11 * c22):20.4f} {b / (c11 * c22) - 1:10.4f}")
    print("\n  kd/pi   g2 phase/pi   law/pi")
    for kd in np.linspace(0.2, 0.9, 8) * np.pi:
        q = p.replace(kd=kd)
        mean = g2_phase_offsets(q)[2]
        law = np.angle(np.exp(1j * gbar_prime(q)))
        print(f"  {kd / np.pi:5.2f} {mean / np.pi:13.3f} {law / np.pi:8.3f}")


if __name__ == "__main__":
    main()
