"""Command-line driver: JSON config in, JSON/CSV artifacts out.

Exit codes:
  0  ok
  2  configuration error (malformed, out of range, invalid geometry)
  3  solver error (no convergence, not critical, resolution too low, ...)
  4  degeneracy abort (base or branch reaches a kernel of Gamma)
  5  verification failure (verify mode)
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .analytic_oracles import ball_Q_eigenvalue, gamma_mode, radial_two_phase
from .branch_solver import (
    NewtonOptions,
    TrustRegion,
    branch_csv,
    fit_circle,
    prepare_base,
    trace_branch,
)
from .errors import ConfigError, DegenerateBase, GeometryError, SerrinError
from .linearized_operator import assemble_Q, assemble_gamma, nondegeneracy_report
from .shape_calculus import ParamVector, residual_g, unsquared_residual
from .spectral_geometry import AngularField, GeometrySpec, basis_index
from .twophase_solver import CRITICALITY_TOL, Conductivity, Resolution, compute_c, solve_state

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DEGENERATE, EXIT_VERIFY = 0, 2, 3, 4, 5
MODES = ("solve", "spectrum", "branch", "branch-projected", "verify", "sweep")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "solve"
    rho: float = 0.5
    xi: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)
    sigma_c: float = 2.0
    s: float = 0.0
    f: dict = field(default_factory=dict)
    eta: tuple = (0.0, 0.0)
    K: int = 32
    n_inner: int = 20
    n_outer: int = 24
    tol: float = 1e-10
    rel_tol: float = 1e-8
    max_iter: int = 30
    refresh_every: int = 3
    steps: int = 10
    sweep_rho: tuple = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    sweep_sigma: tuple = (0.25, 0.5, 2.0, 4.0, 8.0)
    out: str = "out"
    seed: int = 0
    jobs: int = 1

    # -- parsing ------------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Accepts the nested layout {geometry, conductivity, data, resolution, ...}."""
        d = dict(d)
        flat = {}
        geo = d.pop("geometry", {})
        cond = d.pop("conductivity", {})
        data = d.pop("data", {})
        res = d.pop("resolution", {})
        tols = d.pop("tolerances", {})
        branch = d.pop("branch", {})
        sweep = d.pop("sweep", {})
        for src, keys in (
            (geo, ("rho", "xi", "phi")),
            (cond, ("sigma_c", "s")),
            (data, ("f", "eta")),
            (res, ("K", "n_inner", "n_outer")),
            (tols, ("tol", "rel_tol")),
            (branch, ("steps", "max_iter", "refresh_every")),
        ):
            for k in list(src):
                if k not in keys:
                    raise ConfigError(f"unknown config key {k!r}")
                flat[k] = src[k]
        for k, v in sweep.items():
            if k not in ("rho", "sigma_c"):
                raise ConfigError(f"unknown sweep key {k!r}")
            flat["sweep_rho" if k == "rho" else "sweep_sigma"] = tuple(float(x) for x in v)
        known = {f for f in cls.__dataclass_fields__}
        for k, v in d.items():
            if k not in known:
                raise ConfigError(f"unknown config key {k!r}")
            flat[k] = v
        try:
            cfg = cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.normalized()

    def normalized(self) -> "RunConfig":
        try:
            cfg = replace(
                self,
                rho=float(self.rho),
                sigma_c=float(self.sigma_c),
                s=float(self.s),
                eta=tuple(float(v) for v in self.eta),
                K=int(self.K),
                n_inner=int(self.n_inner),
                n_outer=int(self.n_outer),
                tol=float(self.tol),
                rel_tol=float(self.rel_tol),
                steps=int(self.steps),
                seed=int(self.seed),
                jobs=int(self.jobs),
                xi=_coeff_dict(self.xi),
                phi=_coeff_dict(self.phi),
                f=_coeff_dict(self.f),
                sweep_rho=tuple(float(v) for v in self.sweep_rho),
                sweep_sigma=tuple(float(v) for v in self.sweep_sigma),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed value: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.eta) != 2:
            raise ConfigError("eta must be a pair")
        if self.K < 2:
            raise ConfigError("K must be at least 2")
        if self.n_inner < 4 or self.n_inner % 2 or self.n_outer < 4:
            raise ConfigError("n_inner must be even and >= 4; n_outer >= 4")
        if self.steps < 1 or self.jobs < 1:
            raise ConfigError("steps and jobs must be positive")
        if not self.tol > 0 or not self.rel_tol > 0:
            raise ConfigError("tolerances must be positive")
        for name in ("xi", "phi", "f"):
            for lab in getattr(self, name):
                k = int(lab[1:])
                if k > self.K:
                    raise ConfigError(f"{name} mode {lab} exceeds K={self.K}")
        try:
            self.geometry()
            self.conductivity()
        except (GeometryError, SerrinError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        if self.mode == "branch-projected" and self.sigma_c != 1.0:
            raise ConfigError("branch-projected needs the one-phase base (sigma_c = 1)")

    # -- derived objects --------------------------------------------------------
    def angular(self, name: str) -> AngularField:
        c = np.zeros(2 * self.K + 1)
        for lab, v in getattr(self, name).items():
            c[basis_index(int(lab[1:]), "cos" if lab[0] == "a" else "sin")] = v
        return AngularField(c)

    def geometry(self) -> GeometrySpec:
        return GeometrySpec(self.angular("xi"), self.angular("phi"), self.rho)

    def conductivity(self) -> Conductivity:
        return Conductivity(self.sigma_c, self.s)

    def resolution(self) -> Resolution:
        return Resolution(self.K, 0, self.n_inner, self.n_outer)

    def param_vector(self) -> ParamVector:
        return ParamVector(self.angular("phi"), self.angular("f"), self.s, tuple(self.eta))

    def newton_options(self) -> NewtonOptions:
        return NewtonOptions(self.tol, self.max_iter, self.refresh_every, self.rel_tol, TrustRegion())

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("jobs")  # worker count never changes results
        return d

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _coeff_dict(value) -> dict:
    """Coefficients as {"a2": 0.05, "b3": ...} or as a flat (a0, a1, b1, ...) list."""
    if isinstance(value, dict):
        out = {}
        for lab, v in value.items():
            if not (isinstance(lab, str) and len(lab) >= 2 and lab[0] in "ab" and lab[1:].isdigit()):
                raise ConfigError(f"bad coefficient label {lab!r}")
            if lab == "b0":
                raise ConfigError("b0 is not a basis element")
            out[lab] = float(v)
        return dict(sorted(out.items(), key=lambda kv: (int(kv[0][1:]), kv[0][0])))
    if isinstance(value, (list, tuple)):
        if len(value) % 2 == 0:
            raise ConfigError("coefficient lists must have odd length 2K+1")
        labs = ["a0"] + [f"{p}{k}" for k in range(1, len(value) // 2 + 1) for p in "ab"]
        return {lab: float(v) for lab, v in zip(labs, value) if float(v) != 0.0}
    raise ConfigError(f"cannot read coefficients from {value!r}")


# ---------------------------------------------------------------------------
# output helpers


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj, config_hash: str) -> str:
    return json.dumps({"config_hash": config_hash, **obj}, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def polyline_csv(radius: AngularField, M: int, config_hash: str) -> str:
    """Outer boundary sampled at 4 M angles by Fourier evaluation."""
    L = 4 * M
    theta = 2 * np.pi * np.arange(L) / L
    R = radius.values(L)
    lines = [f"# boundary polyline config_hash={config_hash}", "theta,x,y"]
    lines += [f"{t!r},{x!r},{y!r}" for t, x, y in zip(theta.tolist(), (R * np.cos(theta)).tolist(), (R * np.sin(theta)).tolist())]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# modes


def run_solve(cfg: RunConfig, out: Path) -> int:
    geom, cond, res = cfg.geometry(), cfg.conductivity(), cfg.resolution()
    sol = solve_state(geom, cond, res)
    dn = np.abs(sol.dn_nodes)
    c = float(dn.mean())
    f = cfg.angular("f")
    g = residual_g(sol, f, c)
    inner, annulus = sol.inner_values, sol.annulus_values
    jump_u, jump_flux = sol.system.interface_jump(inner, annulus)
    report = {
        "mode": "solve",
        "c": c,
        "criticality_defect": float(np.max(np.abs(dn - c))),
        "critical": bool(np.max(np.abs(dn - c)) / c <= CRITICALITY_TOL),
        "residual_sup_norm": g.sup_norm(),
        "unsquared_residual_sup_norm": unsquared_residual(sol, f, c).sup_norm(),
        "flux_identity_defect": sol.flux_defect(),
        "area": geom.area(),
        "pde_residual": sol.pde_residual,
        "interface_jump_u": jump_u,
        "interface_jump_flux": jump_flux,
        "u_center": float(sol.value_at(0.0, 0.0)[0]),
        "geometry_id": geom.geometry_id,
    }
    write_atomic(out / "solve.json", _json(report, cfg.config_hash))
    write_atomic(out / "boundary.csv", polyline_csv(geom.outer_radius(), res.M, cfg.config_hash))
    return EXIT_OK


def run_spectrum(cfg: RunConfig, out: Path) -> int:
    geom, cond, res = cfg.geometry(), cfg.conductivity(), cfg.resolution()
    sol = solve_state(geom, cond, res)
    gamma = assemble_gamma(geom, cond, sol)
    write_atomic(out / "gamma.csv", gamma.to_csv(cfg.config_hash))
    op = gamma
    try:
        op = assemble_Q(gamma, compute_c(sol))
        write_atomic(out / "Q.csv", op.to_csv(cfg.config_hash))
    except SerrinError:
        pass  # off-critical: Q is undefined, report on Gamma only
    rep = nondegeneracy_report(op, cfg.rel_tol)
    write_atomic(out / "spectrum.csv", op.spectrum_csv(cfg.config_hash))
    verdict = {
        "mode": "spectrum",
        "operator": op.kind,
        **rep.as_dict(),
        "kernel_basis": [k.coefficients for k in rep.kernel_basis],
        "off_diagonal_leakage": op.off_diagonal_leakage(),
        "geometry_id": geom.geometry_id,
    }
    write_atomic(out / "nondegeneracy.json", _json(verdict, cfg.config_hash))
    return EXIT_OK


def run_branch(cfg: RunConfig, out: Path, projected: bool) -> int:
    base_geom = GeometrySpec.concentric(cfg.rho, cfg.K)
    base = prepare_base(base_geom, Conductivity(cfg.sigma_c), cfg.resolution(), cfg.rel_tol)
    lam = cfg.param_vector()
    if not projected and any(lam.eta):
        raise ConfigError("eta is only meaningful in branch-projected mode")
    try:
        trace = trace_branch(base, lam, cfg.steps, cfg.newton_options(), projected=projected)
    except GeometryError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            write_atomic(out / "branch.csv", branch_csv(partial, cfg.K, cfg.config_hash))
        raise
    write_atomic(out / "branch.csv", branch_csv(trace, cfg.K, cfg.config_hash))
    summary = {"mode": trace.mode, "samples": len(trace), "completed": trace.completed, "error": trace.error}
    if len(trace):
        last = trace[-1]
        total = last.xi + lam.eta_field() if projected else last.xi
        write_atomic(out / "boundary.csv", polyline_csv(total + 1.0, cfg.resolution().M, cfg.config_hash))
        fit = fit_circle(total)
        summary.update(
            final_residual=last.residual_norm,
            final_xi_sup=last.xi.sup_norm(),
            circle_center=list(fit.center),
            circle_radius=fit.radius,
            circle_residual=fit.residual,
        )
    write_atomic(out / "branch.json", _json(summary, cfg.config_hash))
    if trace.error.startswith("DegenerateBase"):
        return EXIT_DEGENERATE
    return EXIT_OK if trace.completed else EXIT_SOLVER


def verification_checks(cfg: RunConfig) -> list[dict]:
    """Oracle agreement suite at the configured resolution."""
    res = cfg.resolution()
    checks = []
    kmax = min(8, cfg.K)

    disk = GeometrySpec.concentric(cfg.rho)
    one = Conductivity(1.0)
    sol = solve_state(disk, one, res)
    Q = assemble_Q(assemble_gamma(disk, one, sol), compute_c(sol))
    diag = Q.diagonal_by_mode()
    table = []
    for k in range(kmax + 1):
        ref = ball_Q_eigenvalue(k, 2)
        err = float(np.nanmax(np.abs(diag[k] - ref)))
        table.append({"k": k, "reference": ref, "cos": diag[k, 0], "sin": None if k == 0 else diag[k, 1], "abs_error": err})
    err = max(row["abs_error"] for row in table)
    checks.append({"name": "ball_Q_eigenvalues", "table": table, "max_abs_error": err,
                   "leakage": Q.off_diagonal_leakage(), "passed": err < 1e-9 and Q.off_diagonal_leakage() < 1e-9})

    rep = nondegeneracy_report(Q, cfg.rel_tol)
    kernel_ok = len(rep.kernel_basis) == 2 and all(
        abs(np.linalg.norm(v.coefficients[1:3]) - 1.0) < 1e-8 for v in rep.kernel_basis
    )
    checks.append({"name": "ball_kernel", "kernel_dimension": len(rep.kernel_basis),
                   "next_singular_value": float(rep.spectrum[-3]), "passed": bool(kernel_ok)})

    sig = cfg.sigma_c if cfg.sigma_c != 1.0 else 2.0
    cond = Conductivity(sig)
    sol2 = solve_state(disk, cond, res)
    diag2 = assemble_gamma(disk, cond, sol2).diagonal_by_mode()
    ref2 = np.array([gamma_mode(k, cfg.rho, sig) for k in range(kmax + 1)])
    err2 = float(np.nanmax(np.abs(diag2[: kmax + 1] - ref2[:, None])))
    checks.append({"name": "two_phase_gamma_modes", "sigma_c": sig, "max_abs_error": err2, "passed": err2 < 1e-9})

    prof = radial_two_phase(cfg.rho, sig)
    sys_ = sol2.system
    e_out = np.max(np.abs(sol2.annulus_values - prof(sys_.coords_out.F)))
    e_in = np.max(np.abs(sol2.inner_full() - prof(np.abs(sys_.coords_in.F))))
    err3 = float(max(e_out, e_in))
    checks.append({"name": "radial_state", "max_abs_error": err3, "c": float(compute_c(sol2)), "passed": err3 < 1e-10})

    rng = np.random.default_rng(cfg.seed)
    defects = []
    for _ in range(3):
        xi = AngularField(np.r_[0.0, rng.uniform(-1, 1, 8)] * 0.05 / 4)
        phi = AngularField(np.r_[0.0, rng.uniform(-1, 1, 8)] * 0.05 / 4)
        s = solve_state(GeometrySpec(xi, phi, cfg.rho), cond, res, check_resolution=False)
        defects.append(s.flux_defect())
    checks.append({"name": "flux_identity", "defects": defects, "passed": max(defects) < 1e-8})
    return checks


def run_verify(cfg: RunConfig, out: Path) -> int:
    checks = verification_checks(cfg)
    passed = all(c["passed"] for c in checks)
    write_atomic(out / "verify.json", _json({"mode": "verify", "passed": passed, "checks": checks}, cfg.config_hash))
    return EXIT_OK if passed else EXIT_VERIFY


def _sweep_cell(args):
    rho, sigma, K, n_inner, n_outer, rel_tol = args
    res = Resolution(K, 0, n_inner, n_outer)
    geom = GeometrySpec.concentric(rho)
    cond = Conductivity(sigma)
    sol = solve_state(geom, cond, res)
    gamma = assemble_gamma(geom, cond, sol)
    sv = gamma.singular_values
    oracle = min(abs(gamma_mode(k, rho, sigma)) for k in range(K + 1))
    return rho, sigma, float(sv[-1]), float(sv[0]), oracle, bool(sv[-1] > rel_tol * sv[0])


def run_sweep(cfg: RunConfig, out: Path) -> int:
    cells = [(r, s, cfg.K, cfg.n_inner, cfg.n_outer, cfg.rel_tol) for r in cfg.sweep_rho for s in cfg.sweep_sigma]
    for r, _s, *_ in cells:
        if not 0 < r < 1 - 0.05:
            raise ConfigError(f"sweep rho {r} leaves (0, 0.95)")
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    lines = [f"# sweep K={cfg.K} config_hash={cfg.config_hash}",
             "rho,sigma_c,gamma_smallest_sv,gamma_largest_sv,oracle_min_abs_gamma,nondegenerate"]
    lines += [f"{r!r},{s!r},{a!r},{b!r},{o!r},{int(n)}" for r, s, a, b, o, n in rows]
    write_atomic(out / "sweep.csv", "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="serrin2ph",
        description="Two-phase overdetermined torsion problem: solves, spectra and solution branches.",
        epilog="exit codes: 0 ok, 2 config error, 3 solver error, 4 degeneracy abort, 5 verification failure",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--mode", choices=MODES, help="override the configured mode")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--resolution", metavar="K=<int>", help="angular truncation, e.g. K=24")
    p.add_argument("--tol", type=float, help="Newton residual tolerance")
    p.add_argument("--seed", type=int, help="seed for randomized checks")
    p.add_argument("--jobs", type=int, help="worker processes (sweep only)")
    return p


def load_config(args) -> RunConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.out:
        overrides["out"] = str(args.out)
    if args.resolution:
        key, _, val = args.resolution.partition("=")
        if key.strip() != "K" or not val.strip().isdigit():
            raise ConfigError("--resolution expects K=<int>")
        overrides["K"] = int(val)
    if args.tol is not None:
        overrides["tol"] = args.tol
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    raw = {**raw, **overrides}
    return RunConfig.from_dict(raw)


def run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    if cfg.mode == "solve":
        return run_solve(cfg, out)
    if cfg.mode == "spectrum":
        return run_spectrum(cfg, out)
    if cfg.mode in ("branch", "branch-projected"):
        return run_branch(cfg, out, projected=cfg.mode == "branch-projected")
    if cfg.mode == "verify":
        return run_verify(cfg, out)
    return run_sweep(cfg, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateBase as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except SerrinError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
