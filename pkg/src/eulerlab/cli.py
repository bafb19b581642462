"""Command line entry point: ``eulerlab <subcommand> ...``.

Exit codes: 0 on success or PASS, 1 when a check fails, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _write_reports_csv(path, reports):
    from eulerlab.verifier import write_reports
    write_reports(path, reports)


def cmd_static(args) -> int:
    from eulerlab.static_state import build_static
    st = build_static(args.theta_bar, args.mass, 1.0, args.gravity)
    print(f"c0 = {st.c0:.6f}")
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        st.to_csv(args.out, args.nz)
        print(f"profile written to {args.out}")
    return EXIT_OK


def _initial_state(args, mesh, gas):
    from eulerlab.solver import FieldState
    from eulerlab.static_state import build_static
    C = mesh.coords()
    if args.init == "static":
        st = build_static(args.theta_bar, args.mass, 1.0, args.gravity)
        rho = st.sample(mesh)
        return FieldState.from_primitive(rho, np.full(mesh.shape, args.theta_bar),
                                         np.zeros((mesh.ndim,) + mesh.shape), gas, args.epsilon)
    if args.init == "well-prepared":
        from eulerlab.harness import ExperimentConfig, well_prepared_data
        cfg = ExperimentConfig(c_v=gas.c_v, shape=mesh.shape, Theta_bar=args.theta_bar,
                               total_mass=args.mass, gravity=args.gravity,
                               epsilons=(args.epsilon,))
        return well_prepared_data(cfg, args.epsilon)
    left = C[0] < 0.5
    rho = np.where(left, 1.0, 0.125)
    theta = np.where(left, 1.0, 0.8)
    return FieldState.from_primitive(rho, theta, np.zeros((mesh.ndim,) + mesh.shape), gas, args.epsilon)


def cmd_solve(args) -> int:
    from eulerlab.mesh import Mesh, PotentialField
    from eulerlab.solver import Solver, SolverConfig
    from eulerlab.thermo import GasParams
    gas = GasParams(args.c_v)
    mesh = Mesh(tuple(args.shape), walls=not args.periodic)
    if args.periodic and args.gravity != 0:
        print("gravity needs walls; use --gravity 0 with --periodic", file=sys.stderr)
        return EXIT_USAGE
    cfg = SolverConfig(epsilon=args.epsilon, cfl=args.cfl, flux=args.flux, t_end=args.t_end,
                       snapshot_dt=args.snapshot_dt)
    solver = Solver(mesh, gas, PotentialField(args.gravity), cfg)
    result = solver.run_to_time(_initial_state(args, mesh, gas))
    traj = result.trajectory()
    traj.meta.update(gravity=args.gravity, c_v=args.c_v)
    os.makedirs(args.out, exist_ok=True)
    result.write(args.out)
    traj.save(args.out)
    m = result.column("mass")
    print(f"{result.steps} steps to t = {result.final.t:.6g}; mass drift {abs(m[-1] - m[0]):.3e}")
    if result.failed:
        print(f"run aborted: {result.message}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    from eulerlab.mesh import PotentialField
    from eulerlab.thermo import GasParams
    from eulerlab.trajectory import Trajectory
    from eulerlab.verifier import verify_all
    if args.basis != "default":
        print(f"unknown basis {args.basis!r} (only 'default')", file=sys.stderr)
        return EXIT_USAGE
    traj = Trajectory.load(args.trajectory)
    gravity = args.gravity if args.gravity is not None else float(traj.meta.get("gravity", 0.0))
    gas = GasParams(float(traj.meta.get("c_v", args.c_v)))
    reports = verify_all(traj, PotentialField(gravity), gas, tol=args.tol,
                         entropy=not args.skip_entropy)
    out = args.out or os.path.join(args.trajectory, "residuals.csv")
    _write_reports_csv(out, reports)
    for r in reports:
        print(r.summary())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_build_oscillation(args) -> int:
    from eulerlab.oscillation import OscillationTarget, assemble_full_euler, build_pair, relative_distance
    from eulerlab.verifier import entropy_inequality_check, residual_constrained_incompressible
    target = OscillationTarget(rho=args.rho, p=args.p, Lambda=args.Lambda)
    A, B, m0 = build_pair(target, args.budget, tuple(args.seeds), args.n)
    os.makedirs(args.out, exist_ok=True)
    ok = True
    rows = []
    spectra = {}
    for name, f in (("A", A), ("B", B)):
        with open(os.path.join(args.out, f"plan_{name}.jsonl"), "w") as fh:
            fh.write(f.plan_text())
        traj = f.trajectory()
        div, mom = residual_constrained_incompressible(traj, target.rho)
        ratio = f.gap() / f.gap_history[0]
        ent_slack = float("nan")
        try:
            full, _ = assemble_full_euler(f)
            ent = entropy_inequality_check(full)
            ent_slack = float(np.max(np.abs(ent.normalized)))
            ok &= ent.passed
        except ValueError as exc:
            print(f"field {name}: {exc}")
            ok = False
        ok &= div.passed and mom.passed and ratio <= 0.5
        rows.append([name, ratio, len(f.waves), f.stalls, f.divergence(), div.max_normalized,
                     mom.max_normalized, ent_slack])
        traj.save(os.path.join(args.out, f"field_{name}"))
        k, e = f.spectrum()
        spectra["k"] = k
        spectra[f"energy_{name}"] = e
    dist = relative_distance(A, B)
    same = bool(np.array_equal(A.m[0], B.m[0]))
    ok &= same and dist >= 0.1
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        fh.write(f"# oscillation pair v1 budget={args.budget} seeds={list(args.seeds)} n={args.n}\n")
        w = csv.writer(fh)
        w.writerow(["field", "gap_ratio", "waves", "stalls", "max_div", "div_residual",
                    "momentum_residual", "entropy_slack"])
        w.writerows([[r[0]] + [repr(float(v)) for v in r[1:]] for r in rows])
    with open(os.path.join(args.out, "spectrum.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(spectra))
        for vals in zip(*spectra.values()):
            w.writerow([repr(float(v)) for v in vals])
    for r in rows:
        print(f"field {r[0]}: gap ratio {r[1]:.4f}, {r[2]} waves, {r[3]} stalls")
    print(f"identical initial data: {same}; relative distance {dist:.3f}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_mvs_check(args) -> int:
    from eulerlab.mesh import PotentialField
    from eulerlab.mvs import (check_continuity, check_energy_and_defect, check_entropy,
                              check_momentum, entropy_support_check, load_manifest)
    from eulerlab.thermo import GasParams
    from eulerlab.verifier import write_reports
    Y = load_manifest(args.manifest)
    gas = GasParams(args.c_v)
    pot = PotentialField(args.gravity)
    reports = [check_continuity(Y, tol=args.tol)]
    mom, mu = check_momentum(Y, potential=pot, gas=gas, tol=args.tol, solve=args.solve_defect)
    reports.append(mom)
    try:
        reports.append(check_entropy(Y, gas=gas, tol=args.tol))
    except ValueError as exc:
        print(f"entropy check skipped: {exc}")
    defect = check_energy_and_defect(Y, pot, mu)
    out = args.out or os.path.dirname(os.path.abspath(args.manifest))
    os.makedirs(out, exist_ok=True)
    write_reports(os.path.join(out, "mvs_residuals.csv"), reports)
    defect.write(os.path.join(out, "defect.csv"))
    for r in reports:
        print(r.summary())
    print(f"defect: min {float(np.min(defect.D)):.3e}, {'PASS' if defect.passed else 'FAIL'}; "
          f"smallest c = {defect.c_min:.3e}")
    ok = all(r.passed for r in reports) and defect.passed and defect.dominated
    if args.s0 is not None:
        sup = entropy_support_check(Y, args.s0, gas)
        print(f"entropy support (s0 = {args.s0}): {'PASS' if sup.passed else 'FAIL'} "
              f"({len(sup.violations)} violations)")
        ok &= sup.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_limit_sweep(args) -> int:
    from eulerlab.harness import ExperimentConfig, run_and_write
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    workers = 1 if args.deterministic else args.workers
    out = args.out or cfg.directory
    table, _, diags = run_and_write(cfg, out, workers)
    for r in table.rows:
        print(f"eps={r.epsilon:g} sup_rel_energy={r.sup_rel_energy:.4e} D={r.final_D:.3e} "
              f"{'FAILED ' + r.message if r.failed else ''}")
    print(f"convergence table written to {os.path.join(out, 'convergence.csv')}")
    return EXIT_FAIL if any(r.failed for r in table.rows) else EXIT_OK


def cmd_report(args) -> int:
    from eulerlab.plotting import render_report
    if not os.path.isdir(args.input):
        print(f"no such directory: {args.input}", file=sys.stderr)
        return EXIT_USAGE
    made = render_report(args.input, args.out)
    for p in made:
        print(p)
    if not made:
        print("no recognised CSV files found")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eulerlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("static", help="static state constant and profile")
    s.add_argument("--theta-bar", type=float, default=1.0)
    s.add_argument("--mass", type=float, default=1.0)
    s.add_argument("--gravity", type=float, default=1.0)
    s.add_argument("--nz", type=int, default=64)
    s.add_argument("--out", default="static.csv")
    s.set_defaults(fn=cmd_static)

    s = sub.add_parser("solve", help="run the finite-volume solver")
    s.add_argument("--shape", type=int, nargs="+", default=[32, 16])
    s.add_argument("--init", choices=("static", "well-prepared", "riemann"), default="static")
    s.add_argument("--epsilon", type=float, default=1.0)
    s.add_argument("--flux", choices=("rusanov", "hll", "hllc"), default="rusanov")
    s.add_argument("--cfl", type=float, default=0.4)
    s.add_argument("--t-end", type=float, default=0.1)
    s.add_argument("--snapshot-dt", type=float, default=0.01)
    s.add_argument("--theta-bar", type=float, default=1.0)
    s.add_argument("--mass", type=float, default=1.0)
    s.add_argument("--gravity", type=float, default=1.0)
    s.add_argument("--c-v", type=float, default=1.5)
    s.add_argument("--periodic", action="store_true", help="fully periodic torus (no walls)")
    s.add_argument("--out", default="run")
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("verify", help="weak-form residuals of a saved trajectory")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--basis", default="default")
    s.add_argument("--gravity", type=float, default=None)
    s.add_argument("--c-v", type=float, default=1.5)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--skip-entropy", action="store_true")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_verify)

    s = sub.add_parser("build-oscillation", help="oscillatory field pair from shared initial data")
    s.add_argument("--budget", type=int, default=50)
    s.add_argument("--seeds", type=int, nargs=2, default=[1, 2])
    s.add_argument("--n", type=int, default=128)
    s.add_argument("--rho", type=float, default=1.0)
    s.add_argument("--p", type=float, default=1.0)
    s.add_argument("--Lambda", type=float, default=2.0)
    s.add_argument("--out", default="oscillation")
    s.set_defaults(fn=cmd_build_oscillation)

    s = sub.add_parser("mvs-check", help="measure-valued checks of an atomic Young measure")
    s.add_argument("--manifest", required=True)
    s.add_argument("--gravity", type=float, default=0.0)
    s.add_argument("--c-v", type=float, default=1.5)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--solve-defect", action="store_true", help="reconstruct mu_R by least squares")
    s.add_argument("--s0", type=float, default=None, help="entropy lower bound for the support check")
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_mvs_check)

    s = sub.add_parser("limit-sweep", help="epsilon sweep toward the incompressible limit")
    s.add_argument("--config", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--deterministic", action="store_true", help="serial runs, fixed reduction order")
    s.set_defaults(fn=cmd_limit_sweep)

    s = sub.add_parser("report", help="render PNG figures from CSV outputs")
    s.add_argument("--input", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
