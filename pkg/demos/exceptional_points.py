"""Complex eigenfrequency splitting across the exceptional points.

Sweeps the optical detuning through resonance for a reciprocal (kd = 0) and an
anti-reciprocal (kd = pi/2) beamsplitter and prints Lambda = Omega_+ - Omega_-.
"""
import numpy as np

from fblab import ModeParams
from fblab.rwa import branch_lambda, eigen_solution

TWO_PI = 2 * np.pi


def main():
    g = TWO_PI * 1e3
    base = ModeParams(TWO_PI * 27e3, TWO_PI * 33e3, TWO_PI * 300.0, g)
    for kd in (0.0, np.pi / 2):
        p0 = base.replace(kd=kd)
        print(f"kd = {kd / np.pi:.2f} pi")
        print("  (delta - res)/g   Re Lambda/g   Im Lambda/g   EP")
        for x in np.linspace(-2, 2, 9):
            p = p0.replace(detuning=p0.mech_detuning + x * g)
            lam = branch_lambda(p) / g
            ep = eigen_solution(p).exceptional
            print(f"  {x:+15.2f} {lam.real:13.4f} {lam.imag:13.4f}   {'yes' if ep else ''}")


if __name__ == "__main__":
    main()
