"""Two-mode squashing of an anti-reciprocal beamsplitter.

Compares the analytic stationary variances with a short Monte-Carlo run that
only uses the simulated positions, and converts both to a parametric gain.
"""
import numpy as np

from fblab import DETUNING, ModeParams
from fblab.correlations import squeezing_gain, stationary_variances
from fblab.langevin import simulate
from fblab.sigproc import branch_frame_from_records, collective_variances

TWO_PI = 2 * np.pi


def main(n_traj=100, seed=7):
    gamma = TWO_PI * 473.0
    p = ModeParams.from_temperature(TWO_PI * 30e3, TWO_PI * 34.5e3, gamma, 0.753 * gamma, 293.0,
                                    kd=np.pi / 2)
    p = p.replace(detuning=p.mech_detuning)
    sv = stationary_variances(p)
    print(f"analytic   z+ {sv.normalized[0]:.4f}  z- {sv.normalized[1]:.4f}  "
          f"squashing {sv.squashing_db:.2f} dB")

    burn, duration = 10 / p.gamma, 60 / p.gamma
    e = simulate(p, duration=burn + duration, n_traj=n_traj, seed=seed, record_every=20,
                 dt=TWO_PI / (200 * p.omega2))
    i0 = int(round(burn / e.sample_dt))
    b1, b2 = branch_frame_from_records(e.z[:, 0, i0:], e.z[:, 1, i0:], e.sample_dt, p, DETUNING,
                                       e.mass, t0=i0 * e.sample_dt)
    zp, zm = np.array(collective_variances(b1, b2)) / (0.5 * (p.n1 + p.n2))
    print(f"simulated  z+ {zp:.4f}  z- {zm:.4f}  ({n_traj} trajectories)")
    for name, (a, b) in (("analytic", sv.normalized), ("simulated", (zp, zm))):
        est = squeezing_gain(a, b, p.g, p.gamma)
        print(f"{name:10s} r = {est.r:.3f} (r_max = {est.r_max:.3f})")


if __name__ == "__main__":
    main()
