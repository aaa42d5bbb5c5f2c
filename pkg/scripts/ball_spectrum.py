"""Print the Gamma and Q spectra at a concentric base next to the mode oracle."""
import argparse

import numpy as np

from serrin2ph import Conductivity, GeometrySpec, Resolution, assemble_gamma, assemble_Q, compute_c, solve_state
from serrin2ph.analytic_oracles import gamma_mode


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--K", type=int, default=32)
    args = p.parse_args()

    geom = GeometrySpec.concentric(args.rho)
    cond = Conductivity(args.sigma)
    sol = solve_state(geom, cond, Resolution(args.K))
    gamma = assemble_gamma(geom, cond, sol)
    Q = assemble_Q(gamma, compute_c(sol), sol)
    g, q = gamma.diagonal_by_mode(), Q.diagonal_by_mode()
    print(f"{'k':>3} {'Gamma':>14} {'oracle':>14} {'Q':>14}")
    for k in range(args.K + 1):
        print(f"{k:3d} {g[k, 0]:14.10f} {gamma_mode(k, args.rho, args.sigma):14.10f} {q[k, 0]:14.10f}")
    print(f"off-diagonal leakage {Q.off_diagonal_leakage():.2e}")
    print(f"smallest |Q| singular values {np.round(Q.singular_values[-3:], 12)}")


if __name__ == "__main__":
    main()
