"""Oracle, contact audit, residual, and refinement-study checks."""

import math

import numpy as np
import pytest

from layerfric.assembly import (
    DisplacementField,
    assemble,
    interpolate_nodal,
    project_feasible,
    prolong_nodal,
    restrict_nodal,
    v_norm,
)
from layerfric.laws import FrictionLaw, MaterialLaw
from layerfric.mesh import LayerSpec, build_layered_mesh, refine_uniform
from layerfric.solver import SolverConfig, fixed_point_solve, solve_inner_tresca
from layerfric.verification import (
    ProblemFamily,
    convergence_study,
    greens_identity_check,
    h2_surrogate_norm,
    interpolation_error_vnorm,
    kkt_check,
    oracle_solve_dense,
    residual_R,
    stick_slip_case_analysis,
)

UNIT = MaterialLaw("linear-isotropic", lame_lambda=1.0, lame_mu=1.0)
PRESS = np.array([0.2, -1.0])


def foundation(c=0.5, mu=0.2):
    return FrictionLaw(gN_kind="power", c=c, m_exp=1.0, gT_kind="coulomb", mu=mu)


def stack_problem(nx=2, ny=1, layers=2, mu=0.3, f2=PRESS, width=1.0):
    specs = [LayerSpec(width, 0.5, ny) for _ in range(layers)]
    mesh = build_layered_mesh(specs, nx=nx)
    return assemble(
        mesh,
        [UNIT] * layers,
        f0=None,
        f2=f2,
        interface_laws=[FrictionLaw.interface(mu=mu)] * (layers - 1),
        foundation_law=foundation(mu=mu),
    )


class TestDenseOracle:
    def test_zero_load_gives_zero(self):
        problem = stack_problem(f2=np.zeros(2))
        u = oracle_solve_dense(problem, DisplacementField.zero(problem.mesh))
        assert np.all(u.values == 0.0)

    def test_matches_sweep_solver_on_small_stack(self):
        problem = stack_problem(nx=2)
        assert problem.dofmap.n_dofs <= 30
        p = DisplacementField.zero(problem.mesh)
        u_inner = solve_inner_tresca(problem, p, SolverConfig())
        u_oracle = oracle_solve_dense(problem, p, tol=1e-12)
        scale = 1.0 + v_norm(problem.mesh, u_oracle.values)
        assert v_norm(problem.mesh, u_inner.values - u_oracle.values) <= 1e-8 * scale

    def test_matches_at_nonzero_bound_state(self):
        problem = stack_problem(nx=3, layers=3)
        p = interpolate_nodal(problem.mesh, lambda x, y: (0.02 * x, -0.08 * y))
        u_inner = solve_inner_tresca(problem, p, SolverConfig())
        u_oracle = oracle_solve_dense(problem, p, tol=1e-12)
        scale = 1.0 + v_norm(problem.mesh, u_oracle.values)
        assert v_norm(problem.mesh, u_inner.values - u_oracle.values) <= 1e-8 * scale

    def test_frictionless_instance(self):
        problem = stack_problem(nx=2, mu=0.0)
        p = DisplacementField.zero(problem.mesh)
        u_inner = solve_inner_tresca(problem, p, SolverConfig())
        u_oracle = oracle_solve_dense(problem, p, tol=1e-12)
        scale = 1.0 + v_norm(problem.mesh, u_oracle.values)
        assert v_norm(problem.mesh, u_inner.values - u_oracle.values) <= 1e-8 * scale

    def test_rejects_large_problems(self):
        problem = stack_problem(nx=12, ny=3)
        assert problem.dofmap.n_dofs > 200
        with pytest.raises(ValueError, match="dense regime exceeded"):
            oracle_solve_dense(problem, DisplacementField.zero(problem.mesh))

    def test_rejects_nonlinear_material(self):
        mesh = build_layered_mesh([LayerSpec(1.0, 0.5, 1)], nx=1)
        mat = MaterialLaw("p-perturbed", 1.0, 1.0, gamma=0.3)
        problem = assemble(
            mesh, [mat], f0=None, f2=PRESS,
            interface_laws=[], foundation_law=foundation(),
        )
        with pytest.raises(ValueError, match="linear"):
            oracle_solve_dense(problem, DisplacementField.zero(mesh))


class TestKktCheck:
    def test_zero_state_all_zero(self):
        problem = stack_problem(f2=np.zeros(2))
        report = kkt_check(problem, DisplacementField.zero(problem.mesh))
        assert report.max_entry() == 0.0

    def test_converged_state_feasible(self):
        problem = stack_problem(nx=4)
        u, solver_report = fixed_point_solve(problem, SolverConfig())
        assert solver_report.converged
        report = kkt_check(problem, u)
        assert report.interface_penetration <= 1e-12
        assert math.isfinite(report.max_entry())

    def test_injected_penetration_detected(self):
        problem = stack_problem(nx=4)
        u, _ = fixed_point_solve(problem, SolverConfig())
        values = u.values.copy()
        lower = problem.mesh.interface_pairs[0][1, 1]
        values[2 * lower + 1] += 0.1
        report = kkt_check(problem, DisplacementField(problem.mesh, values))
        assert report.interface_penetration == pytest.approx(0.1, abs=1e-6)

    def test_stick_slip_entry_matches_case_analysis(self):
        problem = stack_problem(nx=4)
        u, _ = fixed_point_solve(problem, SolverConfig())
        report = kkt_check(problem, u)
        direct = stick_slip_case_analysis(problem, u, 0, tol=1e-9)
        assert direct == pytest.approx(report.interface_stick_slip, abs=1e-10)


class TestResidual:
    def test_zero_at_equal_arguments(self):
        problem = stack_problem(nx=3)
        u, _ = fixed_point_solve(problem, SolverConfig())
        assert abs(residual_R(problem, u, u)) <= 1e-14 * (1.0 + abs(problem.load @ u.values))

    def test_nonnegative_toward_feasible_fields(self):
        problem = stack_problem(nx=3)
        u, _ = fixed_point_solve(problem, SolverConfig())
        rng = np.random.default_rng(3)
        scale = 1.0 + np.abs(u.values).max()
        for _ in range(20):
            v = u.values + 0.1 * scale * rng.standard_normal(u.values.shape)
            v[problem.dofmap.dirichlet_dofs] = 0.0
            v = project_feasible(problem, v)
            r = residual_R(problem, u, DisplacementField(problem.mesh, v))
            assert r >= -1e-7 * scale

    def test_mesh_mismatch_rejected(self):
        problem = stack_problem(nx=2)
        other = DisplacementField.zero(refine_uniform(problem.mesh))
        with pytest.raises(ValueError, match="mesh mismatch"):
            residual_R(problem, DisplacementField.zero(problem.mesh), other)


class TestGreensIdentity:
    def test_solved_field_defect_tiny(self):
        problem = stack_problem(nx=3)
        u, _ = fixed_point_solve(problem, SolverConfig())
        assert greens_identity_check(problem, u) <= 1e-10

    def test_arbitrary_field_defect_tiny(self):
        # elementwise integration by parts is exact for any nodal field
        problem = stack_problem(nx=3, layers=3)
        rng = np.random.default_rng(11)
        u = DisplacementField(problem.mesh, rng.standard_normal(problem.dofmap.n_dofs))
        assert greens_identity_check(problem, u) <= 1e-10

    def test_rejects_nonlinear_material(self):
        mesh = build_layered_mesh([LayerSpec(1.0, 0.5, 1)], nx=1)
        mat = MaterialLaw("p-perturbed", 1.0, 1.0, gamma=0.3)
        problem = assemble(
            mesh, [mat], f0=None, f2=PRESS,
            interface_laws=[], foundation_law=foundation(),
        )
        with pytest.raises(ValueError, match="linear"):
            greens_identity_check(problem, DisplacementField.zero(mesh))


class TestNodalTransfers:
    def test_prolong_then_restrict_is_identity(self):
        coarse = build_layered_mesh(
            [LayerSpec(1.5, 0.4, 2), LayerSpec(1.5, 0.6, 1)], nx=3
        )
        fine = refine_uniform(coarse)
        rng = np.random.default_rng(0)
        values = rng.standard_normal(2 * coarse.n_nodes)
        back = restrict_nodal(fine, coarse, prolong_nodal(coarse, fine, values))
        assert np.array_equal(back, values)

    def test_restrict_rejects_non_nested_pair(self):
        coarse = build_layered_mesh([LayerSpec(1.0, 0.5, 1)], nx=2)
        with pytest.raises(ValueError, match="refinement"):
            restrict_nodal(coarse, coarse, np.zeros(2 * coarse.n_nodes))


class TestInterpolationWitness:
    def test_constant_stable_over_levels(self):
        def fn(x, y):
            return (
                math.sin(1.3 * x) * math.cos(0.7 * y),
                math.cos(0.9 * x) * math.sin(1.1 * y),
            )

        def strain_fn(x, y):
            dux_dx = 1.3 * math.cos(1.3 * x) * math.cos(0.7 * y)
            dux_dy = -0.7 * math.sin(1.3 * x) * math.sin(0.7 * y)
            duy_dx = -0.9 * math.sin(0.9 * x) * math.sin(1.1 * y)
            duy_dy = 1.1 * math.cos(0.9 * x) * math.cos(1.1 * y)
            return (dux_dx, duy_dy, 0.5 * (dux_dy + duy_dx))

        mesh = build_layered_mesh(
            [LayerSpec(1.0, 0.5, 2), LayerSpec(1.0, 0.5, 2)], nx=4
        )
        consts = []
        for _ in range(3):
            err = interpolation_error_vnorm(mesh, fn, strain_fn)
            curv = h2_surrogate_norm(mesh, fn)
            consts.append(err / (mesh.h * curv))
            mesh = refine_uniform(mesh)
        assert all(0.01 <= c <= 10.0 for c in consts)
        assert max(consts) / min(consts) <= 1.5


class TestConvergenceStudy:
    def test_small_frictional_study(self):
        def build(mesh):
            return assemble(
                mesh, [UNIT, UNIT], f0=None, f2=PRESS,
                interface_laws=[FrictionLaw.interface(mu=0.2)],
                foundation_law=foundation(),
            )

        base = build_layered_mesh(
            [LayerSpec(1.0, 0.5, 1), LayerSpec(1.0, 0.5, 1)], nx=2
        )
        cfg = SolverConfig(
            inner_method="semismooth", regularization_eps=1e-10, outer_max_iters=200
        )
        table = convergence_study(ProblemFamily(base, build), levels=4, cfg=cfg)
        assert not table.aborted
        assert len(table.h) == 4
        assert all(b < a for a, b in zip(table.h, table.h[1:]))
        assert all(b < a for a, b in zip(table.errors, table.errors[1:]))
        assert table.slope > 0.4
        assert len(table.ratios) == 3
        assert len(table.rows()) == 4
        # error-bound shape: fitted constant stays within a narrow band
        cks = [
            e / (i + abs(r) ** 0.5)
            for e, i, r in zip(table.errors, table.interp_errors, table.residuals)
        ]
        assert max(cks) / min(cks) <= 3.0

    def test_too_few_levels_rejected(self):
        base = build_layered_mesh([LayerSpec(1.0, 0.5, 1)], nx=1)
        fam = ProblemFamily(base, lambda mesh: None)
        with pytest.raises(ValueError, match="levels"):
            convergence_study(fam, levels=3, cfg=SolverConfig())
