"""Fixed-point solver behavior on small contact stacks."""

import numpy as np
import pytest

from layerfric.assembly import (
    DisplacementField,
    assemble,
    interpolate_nodal,
    project_feasible,
    v_norm,
)
from layerfric.laws import FrictionLaw, MaterialLaw
from layerfric.mesh import LayerSpec, build_layered_mesh
from layerfric.solver import (
    InnerProblem,
    InnerSolveError,
    SolverConfig,
    SolverReport,
    estimate_contraction,
    fixed_point_solve,
    solve_inner_tresca,
)

UNIT = MaterialLaw("linear-isotropic", lame_lambda=1.0, lame_mu=1.0)
PRESS = np.array([0.0, -1.0])


def soft_foundation(c=0.5, mu=0.2):
    return FrictionLaw(gN_kind="power", c=c, m_exp=1.0, gT_kind="coulomb", mu=mu)


def two_layer_problem(nx=2, ny=1, c=0.5, mu_iface=0.3, mu_fnd=0.2, f2=PRESS):
    mesh = build_layered_mesh(
        [LayerSpec(1.0, 0.5, ny), LayerSpec(1.0, 0.5, ny)], nx=nx
    )
    return assemble(
        mesh,
        [UNIT, UNIT],
        f0=None,
        f2=f2,
        interface_laws=[FrictionLaw.interface(mu=mu_iface)],
        foundation_law=soft_foundation(c=c, mu=mu_fnd),
    )


def three_layer_problem(nx=4):
    mesh = build_layered_mesh(
        [
            LayerSpec(2.0, 0.6, 2),
            LayerSpec(2.0, 0.5, 1),
            LayerSpec(2.0, 0.4, 1),
        ],
        nx=nx,
    )
    mats = [
        MaterialLaw("linear-isotropic", 0.5, 1.0),
        MaterialLaw("linear-isotropic", 1.0, 1.5),
        MaterialLaw("linear-isotropic", 2.0, 3.0),
    ]
    ifaces = [FrictionLaw.interface(mu=0.1), FrictionLaw.interface(mu=0.1)]
    return assemble(
        mesh, mats, f0=None, f2=PRESS,
        interface_laws=ifaces, foundation_law=soft_foundation(),
    )


class TestInnerSolve:
    def test_zero_forcing_gives_zero(self):
        problem = two_layer_problem(f2=np.zeros(2))
        u = solve_inner_tresca(problem, DisplacementField.zero(problem.mesh), SolverConfig())
        assert np.all(u.values == 0.0)

    def test_feasible_within_machine_precision(self):
        problem = two_layer_problem()
        p = DisplacementField.zero(problem.mesh)
        u = solve_inner_tresca(problem, p, SolverConfig())
        inner = InnerProblem(problem, p)
        assert inner.max_violation(u.values) <= 1e-12 * (1.0 + np.abs(u.values).max())

    def test_solution_minimizes_over_feasible_directions(self):
        problem = two_layer_problem()
        p = interpolate_nodal(problem.mesh, lambda x, y: (0.01 * x, -0.05 * y))
        cfg = SolverConfig()
        u = solve_inner_tresca(problem, p, cfg)
        inner = InnerProblem(problem, p)
        base = inner.objective(u.values)
        scale = 1.0 + abs(base)
        rng = np.random.default_rng(7)
        amp = 1.0 + np.abs(u.values).max()
        for _ in range(200):
            v = u.values + amp * rng.standard_normal(u.values.shape) * rng.choice(
                [1e-4, 1e-2, 1.0]
            )
            v[problem.dofmap.dirichlet_dofs] = 0.0
            v = project_feasible(problem, v)
            assert inner.objective(v) >= base - 1e-8 * scale

    def test_sweeps_decrease_energy(self):
        problem = two_layer_problem(nx=3)
        p = DisplacementField.zero(problem.mesh)
        inner = InnerProblem(problem, p)
        u = np.zeros(problem.dofmap.n_dofs)
        last = inner.objective(u)
        for _ in range(40):
            inner.sweep(u, 1, 0.0)
            now = inner.objective(u)
            assert now <= last + 1e-12 * (1.0 + abs(last))
            last = now

    def test_runs_out_of_sweeps_honestly(self):
        problem = two_layer_problem()
        cfg = SolverConfig(inner_max_iters=2)
        with pytest.raises(InnerSolveError, match="did not reach tolerance"):
            solve_inner_tresca(problem, DisplacementField.zero(problem.mesh), cfg)


class TestFixedPoint:
    def test_converges_on_soft_foundation(self):
        problem = two_layer_problem()
        u, report = fixed_point_solve(problem, SolverConfig())
        assert report.converged
        assert report.outer_iters >= 2
        assert report.contraction_ratios[-1] < 1.0
        assert report.kkt is not None
        assert report.kkt.interface_penetration <= 1e-12

    def test_zero_load_converges_immediately(self):
        problem = two_layer_problem(f2=np.zeros(2))
        u, report = fixed_point_solve(problem, SolverConfig())
        assert report.converged
        assert report.outer_iters == 1
        assert np.all(u.values == 0.0)
        assert report.kkt.max_entry() == 0.0

    def test_deterministic_bitwise(self):
        runs = []
        for _ in range(2):
            problem = two_layer_problem(nx=3)
            u, report = fixed_point_solve(problem, SolverConfig())
            runs.append((u.values.copy(), report.signature()))
        assert np.array_equal(runs[0][0], runs[1][0])
        assert runs[0][1] == runs[1][1]

    def test_warm_start_reaches_same_fixed_point(self):
        problem = two_layer_problem()
        cfg = SolverConfig()
        u_cold, _ = fixed_point_solve(problem, cfg)
        p0 = interpolate_nodal(problem.mesh, lambda x, y: (0.0, -0.1 * y))
        u_warm, report = fixed_point_solve(problem, cfg, p0)
        assert report.converged
        tol = 20 * cfg.outer_tol * (1.0 + v_norm(problem.mesh, u_cold.values))
        assert v_norm(problem.mesh, u_cold.values - u_warm.values) <= tol

    def test_contraction_grows_with_friction(self):
        # shear-dominated load keeps part of the interface near zero
        # normal stress, so the friction feedback never saturates
        def sliding_stack(mu):
            mesh = build_layered_mesh(
                [LayerSpec(2.0, 0.5, 1), LayerSpec(2.0, 0.5, 1)], nx=4
            )
            return assemble(
                mesh, [UNIT, UNIT], f0=None, f2=np.array([0.8, -0.18]),
                interface_laws=[FrictionLaw.interface(mu=mu, delta=0.1)],
                foundation_law=soft_foundation(c=1.0, mu=0.2),
            )

        cfg = SolverConfig(outer_max_iters=150)
        ratios = []
        for mu in (0.1, 1.0):
            u, report = fixed_point_solve(sliding_stack(mu), cfg)
            assert report.converged
            ratios.append(estimate_contraction(report))
        assert ratios[0] <= ratios[1] + 1e-9
        for mu in (10.0, 1000.0):
            u, report = fixed_point_solve(sliding_stack(mu), cfg)
            assert not report.converged
            assert report.diagnostic == "M > m condition likely violated"

    def test_divergence_is_flagged_not_returned(self):
        problem = two_layer_problem(c=50.0)
        u, report = fixed_point_solve(problem, SolverConfig())
        assert not report.converged
        assert report.diagnostic == "M > m condition likely violated"

    def test_iteration_cap_reported(self):
        problem = two_layer_problem()
        u, report = fixed_point_solve(problem, SolverConfig(outer_max_iters=2))
        assert not report.converged
        assert "limit" in report.diagnostic


class TestSemismooth:
    def test_agrees_with_sweeps(self):
        problem = three_layer_problem()
        u1, r1 = fixed_point_solve(problem, SolverConfig(inner_method="projected-sor"))
        u2, r2 = fixed_point_solve(
            problem,
            SolverConfig(inner_method="semismooth", regularization_eps=1e-9),
        )
        assert r1.converged and r2.converged
        scale = 1.0 + v_norm(problem.mesh, u1.values)
        assert v_norm(problem.mesh, u1.values - u2.values) <= 1e-6 * scale

    def test_requires_regularization(self):
        with pytest.raises(ValueError, match="regularization_eps"):
            cfg = SolverConfig(inner_method="semismooth", regularization_eps=0.0)
            fixed_point_solve(two_layer_problem(), cfg)

    def test_feasible_by_construction(self):
        problem = three_layer_problem()
        cfg = SolverConfig(inner_method="semismooth", regularization_eps=1e-9)
        u, report = fixed_point_solve(problem, cfg)
        p = DisplacementField(problem.mesh, u.values)
        inner = InnerProblem(problem, p)
        assert inner.max_violation(u.values) <= 1e-12 * (1.0 + np.abs(u.values).max())


class TestNonlinearMaterial:
    def test_small_perturbation_stays_near_linear(self):
        mesh = build_layered_mesh(
            [LayerSpec(1.0, 0.5, 1), LayerSpec(1.0, 0.5, 1)], nx=2
        )
        soft = MaterialLaw("p-perturbed", 1.0, 1.0, gamma=1e-6)
        args = dict(
            f0=None, f2=PRESS,
            interface_laws=[FrictionLaw.interface(mu=0.3)],
            foundation_law=soft_foundation(),
        )
        lin = assemble(mesh, [UNIT, UNIT], **args)
        per = assemble(mesh, [soft, soft], **args)
        u_lin, r_lin = fixed_point_solve(lin, SolverConfig())
        u_per, r_per = fixed_point_solve(per, SolverConfig())
        assert r_lin.converged and r_per.converged
        scale = v_norm(mesh, u_lin.values)
        assert v_norm(mesh, u_lin.values - u_per.values) <= 1e-4 * scale

    def test_converges_with_visible_perturbation(self):
        mesh = build_layered_mesh(
            [LayerSpec(1.0, 0.5, 1), LayerSpec(1.0, 0.5, 1)], nx=2
        )
        mat = MaterialLaw("p-perturbed", 1.0, 1.0, gamma=0.4)
        problem = assemble(
            mesh, [mat, mat], f0=None, f2=PRESS,
            interface_laws=[FrictionLaw.interface(mu=0.3)],
            foundation_law=soft_foundation(),
        )
        u, report = fixed_point_solve(problem, SolverConfig())
        assert report.converged
        # the secant matrix must reproduce the nonlinear operator at u
        resid = problem.matrix_at(u.values) @ u.values - problem.apply_operator(u.values)
        assert np.abs(resid).max() <= 1e-12


class TestContractionEstimate:
    def test_geometric_mean_of_tail(self):
        report = SolverReport(
            converged=True, outer_iters=5,
            diff_norms=[1.0, 0.5, 0.25, 0.125],
            contraction_ratios=[0.5, 0.5, 0.5],
            inner_iters=[3, 3, 3, 3],
        )
        assert estimate_contraction(report) == pytest.approx(0.5)

    def test_too_few_iterations_rejected(self):
        report = SolverReport(
            converged=True, outer_iters=1, diff_norms=[0.0],
            contraction_ratios=[], inner_iters=[2],
        )
        with pytest.raises(ValueError, match="too few iterations"):
            estimate_contraction(report)
