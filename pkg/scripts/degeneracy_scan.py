"""Smallest |Gamma| mode over a (rho, sigma_c) grid from the closed form, checked against assembly."""
import argparse

import numpy as np

from serrin2ph import Conductivity, GeometrySpec, Resolution, assemble_gamma, solve_state
from serrin2ph.analytic_oracles import gamma_mode


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--check", action="store_true", help="also assemble Gamma at each grid point")
    args = p.parse_args()

    rhos = np.round(np.linspace(0.1, 0.9, 9), 3)
    sigmas = (0.1, 0.25, 0.5, 2.0, 4.0, 10.0)
    print("rho    " + " ".join(f"{s:>9g}" for s in sigmas))
    for rho in rhos:
        row = []
        for s in sigmas:
            vals = np.array([abs(gamma_mode(k, rho, s)) for k in range(args.K + 1)])
            entry = vals.min()
            if args.check:
                geom, cond = GeometrySpec.concentric(rho), Conductivity(s)
                gamma = assemble_gamma(geom, cond, solve_state(geom, cond, Resolution(args.K)))
                entry = abs(gamma.singular_values[-1] - entry)
            row.append(entry)
        print(f"{rho:<6g} " + " ".join(f"{v:9.2e}" for v in row))


if __name__ == "__main__":
    main()
