"""Trace the two-phase branch along t * lambda and print the scaling of xi."""
import argparse

from serrin2ph import AngularField, Conductivity, GeometrySpec, ParamVector, Resolution, prepare_base, trace_branch


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--phi2", type=float, default=0.05, help="cos(2 theta) amplitude of the inclusion perturbation")
    p.add_argument("--f3", type=float, default=0.0, help="cos(3 theta) amplitude of the boundary data")
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--K", type=int, default=24)
    args = p.parse_args()

    base = prepare_base(GeometrySpec.concentric(0.5, args.K), Conductivity(args.sigma), Resolution(args.K))
    lam = ParamVector(AngularField.mode(2, amplitude=args.phi2), AngularField.mode(3, amplitude=args.f3), args.s)
    trace = trace_branch(base, lam, args.steps)
    print(f"{'t':>6} {'|xi|_inf':>12} {'|xi|/t':>12} {'residual':>10} {'iters':>5} {'min sv':>10}")
    for smp in trace:
        n = smp.xi.sup_norm()
        print(f"{smp.t:6.3f} {n:12.4e} {n / smp.t:12.6f} {smp.residual_norm:10.2e} {smp.iterations:5d} {smp.gamma_smallest_sv:10.4f}")
    if trace.error:
        print("stopped:", trace.error)


if __name__ == "__main__":
    main()
