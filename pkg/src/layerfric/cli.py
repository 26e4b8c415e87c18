"""Command-line front end for batch runs.

    layerfric <command> --config <path> [--out-dir <path>] [--levels N] [--seed N]

Commands: mesh (build + audit + emit), solve (fixed-point run), converge
(refinement study), verify (independent checks). Exit status is 0 iff
everything requested succeeded.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from .assembly import DisplacementField, compute_stress, v_norm
from .config import (
    ConfigError,
    ProblemConfig,
    build_mesh,
    build_problem,
    make_family,
    parse_config,
)
from .mesh import audit_mesh, write_mesh_text
from .output import (
    write_convergence_csv,
    write_csv,
    write_gnuplot_dat,
    write_kkt_csv,
    write_report_csv,
    write_vtk,
)
from .solver import InnerSolveError, SolverConfig, fixed_point_solve, solve_inner_tresca
from .verification import (
    DENSE_DOF_LIMIT,
    convergence_study,
    greens_identity_check,
    kkt_check,
    oracle_solve_dense,
    stick_slip_case_analysis,
)


def _load(args) -> tuple[ProblemConfig, Path]:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SystemExit(f"error: cannot read config: {exc}")
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        raise SystemExit(f"error: {exc}")
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, solver=dataclasses.replace(cfg.solver, seed=args.seed)
        )
    out_dir = Path(args.out_dir) if args.out_dir else Path(cfg.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    return cfg, out_dir


def cmd_mesh(args) -> int:
    cfg, out = _load(args)
    mesh = build_mesh(cfg)
    violations = audit_mesh(mesh)
    write_mesh_text(mesh, out / "mesh.txt")
    write_vtk(out / "mesh.vtk", mesh)
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, "
          f"{mesh.n_layers} layers, h = {mesh.h:.6g}")
    for line in violations:
        print(f"audit violation: {line}")
    print(f"wrote {out / 'mesh.txt'} and {out / 'mesh.vtk'}")
    return 0 if not violations else 1


def cmd_solve(args) -> int:
    cfg, out = _load(args)
    mesh = build_mesh(cfg)
    problem = build_problem(cfg, mesh)
    t0 = time.perf_counter()
    try:
        u, report = fixed_point_solve(problem, cfg.solver)
    except InnerSolveError as exc:
        print(f"error: inner solve failed: {exc}")
        return 1
    elapsed = time.perf_counter() - t0
    stress = compute_stress(problem, u)
    write_vtk(
        out / "solution.vtk", mesh,
        point_vectors={"displacement": u.as_vectors()},
        cell_tensors={"stress": stress.tri_stress},
    )
    write_csv(
        out / "stress.csv",
        ["cell", "sigma_xx", "sigma_yy", "sigma_xy"],
        [[str(i), row[0], row[1], row[2]]
         for i, row in enumerate(stress.tri_stress)],
    )
    write_report_csv(out / "solver_report.csv", report)
    if report.kkt is not None:
        write_kkt_csv(out / "kkt_report.csv", report.kkt)
    log = [
        f"dofs {problem.dofmap.n_dofs}",
        f"outer iterations {report.outer_iters}",
        f"converged {report.converged}",
        f"diagnostic {report.diagnostic}" if report.diagnostic else "diagnostic none",
        f"displacement norm {v_norm(problem, u.values):.17g}",
        f"wall seconds {elapsed:.3f}",
    ]
    (out / "solve.log").write_text("\n".join(log) + "\n")
    for line in log:
        print(line)
    if cfg.output.figures:
        from .figures import fig_contraction, fig_deformed

        fig_contraction(out / "contraction.png", report)
        fig_deformed(out / "deformed.png", mesh, u)
    if not report.converged:
        print(f"error: fixed point did not converge: {report.diagnostic}")
        return 1
    return 0


def cmd_converge(args) -> int:
    cfg, out = _load(args)
    family = make_family(cfg, args.levels)
    try:
        table = convergence_study(family, args.levels, cfg.solver)
    except (InnerSolveError, ValueError) as exc:
        print(f"error: study failed: {exc}")
        return 1
    write_convergence_csv(out / "convergence.csv", table)
    write_gnuplot_dat(out / "convergence.dat", table)
    for h, dofs, err, ratio, slope in table.rows():
        print(f"h {h:.6g}  dofs {dofs}  error {err:.6g}  ratio {ratio:.4g}")
    print(f"fitted slope {table.slope:.4g}  ({table.reference})")
    if cfg.output.figures:
        from .figures import fig_convergence

        fig_convergence(out / "convergence.png", table)
    if table.aborted:
        print("error: study aborted before the requested depth")
        return 1
    return 0


def cmd_verify(args) -> int:
    cfg, out = _load(args)
    mesh = build_mesh(cfg)
    problem = build_problem(cfg, mesh)
    failures = 0

    n = problem.dofmap.n_dofs
    linear = all(law.kind == "linear-isotropic" for law in problem.materials)
    if n > DENSE_DOF_LIMIT:
        print(f"oracle equivalence: skipped: dense regime exceeded ({n} dofs)")
    elif not linear:
        print("oracle equivalence: skipped: nonlinear material law")
    else:
        p = DisplacementField.zero(mesh)
        u_fast = solve_inner_tresca(problem, p, cfg.solver)
        u_ref = oracle_solve_dense(problem, p)
        gap = v_norm(problem, u_fast.values - u_ref.values)
        bar = 1e-7 * (1.0 + v_norm(problem, u_ref.values))
        ok = gap <= bar
        print(f"oracle equivalence: {'PASS' if ok else 'FAIL'} "
              f"({gap:.3e} vs {bar:.3e})")
        failures += 0 if ok else 1

    try:
        u, report = fixed_point_solve(problem, cfg.solver)
    except InnerSolveError as exc:
        print(f"solve for checks: FAIL ({exc})")
        return 1
    if not report.converged:
        print(f"solve for checks: FAIL (not converged: {report.diagnostic})")
        return 1

    if linear:
        resid = greens_identity_check(problem, u, seed=cfg.solver.seed)
        scale = 1e-10 * (1.0 + v_norm(problem, u.values))
        ok = resid <= scale
        print(f"discrete divergence identity: {'PASS' if ok else 'FAIL'} "
              f"({resid:.3e} vs {scale:.3e})")
        failures += 0 if ok else 1
    else:
        print("discrete divergence identity: skipped: nonlinear material law")

    kkt = kkt_check(problem, u)
    defect = 0.0
    for i in range(len(mesh.interface_pairs)):
        defect = max(defect, stick_slip_case_analysis(problem, u, i))
    gap = abs(defect - kkt.interface_stick_slip)
    bar = 1e-10 * (1.0 + defect)
    ok = gap <= bar
    print(f"stick-slip case analysis: {'PASS' if ok else 'FAIL'} "
          f"({gap:.3e} vs {bar:.3e})")
    failures += 0 if ok else 1

    print(f"verify: {'all checks passed' if failures == 0 else f'{failures} failed'}")
    return 0 if failures == 0 else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="layerfric",
        description="Frictional contact solver for stacked elastic layers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("mesh", cmd_mesh), ("solve", cmd_solve),
        ("converge", cmd_converge), ("verify", cmd_verify),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to an INI problem config")
        p.add_argument("--out-dir", default=None, help="output directory override")
        p.add_argument("--levels", type=int, default=4,
                       help="refinement levels for converge")
        p.add_argument("--seed", type=int, default=None, help="solver seed override")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
