"""Projected continuation at the one-phase disk along a translation eta."""
import argparse

from serrin2ph import Conductivity, GeometrySpec, ParamVector, Resolution, fit_circle, prepare_base
from serrin2ph.branch_solver import solve_branch_projected


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eta", type=float, nargs=2, default=(0.1, 0.0))
    p.add_argument("--K", type=int, default=32)
    args = p.parse_args()

    base = prepare_base(GeometrySpec.concentric(0.5), Conductivity(1.0), Resolution(args.K))
    lam = ParamVector(eta=tuple(args.eta))
    xi, rep = solve_branch_projected(base, lam)
    fit = fit_circle(xi + lam.eta_field())
    a, b = args.eta
    print(f"iterations {rep.iterations}, residual {rep.residual_norm:.2e}, Y1 part {rep.y1_residual:.2e}")
    print(f"a0 = {xi.cos_coeff(0):.8f}  (second order: {-(a * a + b * b) / 4:.8f})")
    print(f"a2 = {xi.cos_coeff(2):.8f}  (second order: {(a * a - b * b) / 4:.8f})")
    print(f"circle fit: center {fit.center}, radius {fit.radius:.12f}, residual {fit.residual:.2e}")


if __name__ == "__main__":
    main()
