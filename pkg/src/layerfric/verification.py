"""Independent oracles and theory checks.

Everything here cross-examines the main solver from the outside: a
dense accelerated proximal-gradient solve of the frozen-bound problem
(no code shared with the sweep solver), a contact-condition audit on
recovered stresses, the consistency residual used by the error bound,
a discrete Green's-identity defect, and the mesh-refinement study.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import (
    DisplacementField,
    VIProblem,
    eval_j,
    friction_bound_data,
    jump_normal,
    jump_tangential,
    prolong_nodal,
    recover_foundation_stress,
    recover_interface_stress,
    restrict_nodal,
    strain_all,
    v_norm,
)
from .laws import friction_bound, normal_compliance, stress_voigt
from .mesh import Mesh, refine_uniform

DENSE_DOF_LIMIT = 200


@dataclass(frozen=True)
class KktReport:
    """Maxima of the contact-condition defects of a solved state.

    Interface entries cover every interlayer pair; foundation entries
    cover the contact line with the compliant support. All values are
    nonnegative; a perfect solution on an exact stress field would make
    them all zero, while recovered stresses leave mesh-sized residues.
    """

    interface_penetration: float = 0.0
    interface_complementarity: float = 0.0
    interface_cone: float = 0.0
    interface_stick_slip: float = 0.0
    foundation_compliance: float = 0.0
    foundation_cone: float = 0.0
    foundation_stick_slip: float = 0.0

    def entries(self) -> list[tuple[str, float]]:
        return [
            ("interface_penetration", self.interface_penetration),
            ("interface_complementarity", self.interface_complementarity),
            ("interface_cone", self.interface_cone),
            ("interface_stick_slip", self.interface_stick_slip),
            ("foundation_compliance", self.foundation_compliance),
            ("foundation_cone", self.foundation_cone),
            ("foundation_stick_slip", self.foundation_stick_slip),
        ]

    def max_entry(self) -> float:
        return max(v for _, v in self.entries())


@dataclass
class ConvergenceTable:
    """Refinement-study results against a fine reference solve."""

    h: list[float]
    dofs: list[int]
    errors: list[float]
    ratios: list[float]
    slope: float
    reference: str
    interp_errors: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    aborted: bool = False

    def __post_init__(self) -> None:
        if any(b >= a for a, b in zip(self.h, self.h[1:])):
            raise ValueError("table rows must have strictly decreasing h")

    def rows(self) -> list[tuple]:
        out = []
        for k in range(len(self.h)):
            ratio = self.ratios[k] if k < len(self.ratios) else math.nan
            out.append((self.h[k], self.dofs[k], self.errors[k], ratio, self.slope))
        return out


def oracle_solve_dense(
    problem: VIProblem, p: DisplacementField, tol: float = 1e-10
) -> DisplacementField:
    """Dense reference solve of the frozen-bound problem.

    Accelerated proximal gradient descent with exact closed-form block
    proximal steps and momentum restart, on the dense free-dof system.
    Written against the problem data only; shares no code with the
    sweep-based inner solver.
    """
    n = problem.dofmap.n_dofs
    if n > DENSE_DOF_LIMIT:
        raise ValueError(
            f"dense regime exceeded: {n} dofs > {DENSE_DOF_LIMIT}"
        )
    if not problem.is_linear:
        raise ValueError("dense oracle requires a linear material law")

    free = problem.dofmap.free_dofs
    dirichlet = set(problem.dofmap.dirichlet_dofs.tolist())
    k_free = problem.a_matrix.toarray()[np.ix_(free, free)]

    pressure, fnd_bound, iface_bounds = friction_bound_data(problem, p)
    f_eff = problem.load.copy()
    f_eff[2 * problem.foundation_nodes + 1] += problem.foundation_weights * pressure
    f_free = f_eff[free]

    pos = np.full(n, -1, dtype=np.int64)
    pos[free] = np.arange(len(free))

    shrink_idx, shrink_w = [], []
    for node, w, g in zip(
        problem.foundation_nodes, problem.foundation_weights, fnd_bound
    ):
        d = 2 * int(node)
        if d not in dirichlet:
            shrink_idx.append(pos[d])
            shrink_w.append(w * g)
    shrink_idx = np.array(shrink_idx, dtype=np.int64)
    shrink_w = np.array(shrink_w)

    slip_a, slip_b, slip_w, gap_a, gap_b = [], [], [], [], []
    for i, pairs in enumerate(problem.mesh.interface_pairs):
        for (up, lo), w, g in zip(
            pairs, problem.interface_weights[i], iface_bounds[i]
        ):
            ux, lx = 2 * int(up), 2 * int(lo)
            if ux in dirichlet:
                continue
            slip_a.append(pos[ux])
            slip_b.append(pos[lx])
            slip_w.append(w * g)
            gap_a.append(pos[ux + 1])
            gap_b.append(pos[lx + 1])
    slip_a = np.array(slip_a, dtype=np.int64)
    slip_b = np.array(slip_b, dtype=np.int64)
    slip_w = np.array(slip_w)
    gap_a = np.array(gap_a, dtype=np.int64)
    gap_b = np.array(gap_b, dtype=np.int64)

    eigs = np.linalg.eigvalsh(k_free)
    if eigs[0] <= 0:
        raise ValueError("stiffness on free dofs is not positive definite")
    lip, mu = float(eigs[-1]), float(eigs[0])
    q = math.sqrt(mu / lip)
    momentum = (1.0 - q) / (1.0 + q)

    def prox(z: np.ndarray, t: float) -> np.ndarray:
        out = z.copy()
        if len(shrink_idx):
            v = out[shrink_idx]
            out[shrink_idx] = np.sign(v) * np.maximum(np.abs(v) - t * shrink_w, 0.0)
        if len(slip_a):
            va, vb = out[slip_a], out[slip_b]
            d0 = va - vb
            d1 = np.sign(d0) * np.maximum(np.abs(d0) - 2.0 * t * slip_w, 0.0)
            shift = 0.5 * (d0 - d1)
            out[slip_a] = va - shift
            out[slip_b] = vb + shift
        if len(gap_a):
            va, vb = out[gap_a], out[gap_b]
            over = np.maximum(vb - va, 0.0)
            out[gap_a] = va + 0.5 * over
            out[gap_b] = vb - 0.5 * over
        return out

    def nonsmooth(z: np.ndarray) -> float:
        total = float((shrink_w * np.abs(z[shrink_idx])).sum()) if len(shrink_idx) else 0.0
        if len(slip_a):
            total += float((slip_w * np.abs(z[slip_a] - z[slip_b])).sum())
        return total

    def objective(z: np.ndarray) -> float:
        return 0.5 * float(z @ (k_free @ z)) - float(f_free @ z) + nonsmooth(z)

    x = prox(np.zeros(len(free)), 1.0 / lip)
    y = x.copy()
    f_prev = objective(x)
    cond = 1.0 + lip / mu
    converged = False
    for _ in range(500_000):
        grad = k_free @ y - f_free
        x_new = prox(y - grad / lip, 1.0 / lip)
        step = float(np.linalg.norm(x_new - y))
        if cond * step <= tol * (1.0 + float(np.linalg.norm(x_new))):
            x = x_new
            converged = True
            break
        f_new = objective(x_new)
        if f_new > f_prev:
            y = x_new.copy()
        else:
            y = x_new + momentum * (x_new - x)
        x, f_prev = x_new, f_new
    if not converged:
        raise RuntimeError("dense oracle did not reach its tolerance")
    values = np.zeros(n)
    values[free] = x
    return DisplacementField(problem.mesh, values)


def kkt_check(problem: VIProblem, u: DisplacementField, tol: float = 1e-10) -> KktReport:
    """Audit the contact conditions of a solved state via recovered stress.

    tol only affects the stick/slip branch classification used by the
    case-analysis helper; the reported maxima are raw defects. Nodes with
    a constrained dof are excluded: their momentum balance carries the
    constraint reaction, so recovered traction there does not have to
    satisfy the contact law.
    """
    mesh = problem.mesh
    constrained = np.zeros(problem.dofmap.n_dofs, dtype=bool)
    constrained[problem.dofmap.dirichlet_dofs] = True

    def free_nodes(nodes: np.ndarray) -> np.ndarray:
        return ~(constrained[2 * nodes] | constrained[2 * nodes + 1])

    ipen = icomp = icone = islip = 0.0
    for i, law in enumerate(problem.interface_laws):
        pairs = mesh.interface_pairs[i]
        keep = free_nodes(pairs[:, 0]) & free_nodes(pairs[:, 1])
        jn = jump_normal(mesh, u, i)[keep]
        jt = jump_tangential(mesh, u, i)[keep]
        sigma_n, sigma_t = recover_interface_stress(problem, u, i)
        sigma_n, sigma_t = sigma_n[keep], sigma_t[keep]
        bound = np.asarray(friction_bound(law, np.maximum(0.0, -sigma_n)))
        ipen = max(ipen, float(np.maximum(jn, 0.0).max(initial=0.0)))
        icomp = max(icomp, float(np.abs(sigma_n * jn).max(initial=0.0)))
        icone = max(
            icone, float(np.maximum(np.abs(sigma_t) - bound, 0.0).max(initial=0.0))
        )
        islip = max(
            islip, float(np.abs(bound * np.abs(jt) + sigma_t * jt).max(initial=0.0))
        )

    keep = free_nodes(problem.foundation_nodes)
    u_beta = -u.values[1::2][problem.foundation_nodes][keep]
    u_eta = u.values[0::2][problem.foundation_nodes][keep]
    sigma_n, sigma_t = recover_foundation_stress(problem, u)
    sigma_n, sigma_t = sigma_n[keep], sigma_t[keep]
    pressure = np.asarray(normal_compliance(problem.foundation_law, u_beta))
    bound = np.asarray(friction_bound(problem.foundation_law, pressure))
    fcomp = float(np.abs(sigma_n + pressure).max(initial=0.0))
    fcone = float(np.maximum(np.abs(sigma_t) - bound, 0.0).max(initial=0.0))
    fslip = float(np.abs(bound * np.abs(u_eta) + sigma_t * u_eta).max(initial=0.0))

    return KktReport(
        interface_penetration=ipen,
        interface_complementarity=icomp,
        interface_cone=icone,
        interface_stick_slip=islip,
        foundation_compliance=fcomp,
        foundation_cone=fcone,
        foundation_stick_slip=fslip,
    )


def stick_slip_case_analysis(
    problem: VIProblem, u: DisplacementField, i: int, tol: float = 1e-10
) -> float:
    """Direct three-branch check of the interface friction law.

    Classifies each pair as sticking or slipping by the slip magnitude
    and measures the defect of the matching branch: sticking pairs must
    lie inside the friction cone, slipping pairs must realize the bound
    with traction opposing the slip. Agrees with the stick-slip entry of
    kkt_check for consistent states.
    """
    jt = jump_tangential(problem.mesh, u, i)
    sigma_n, sigma_t = recover_interface_stress(problem, u, i)
    law = problem.interface_laws[i]
    bound = np.asarray(friction_bound(law, np.maximum(0.0, -sigma_n)))
    slip_scale = max(float(np.abs(jt).max(initial=0.0)), 1.0)
    defect = 0.0
    for t, s, g in zip(jt, sigma_t, bound):
        if abs(t) <= tol * slip_scale:
            defect = max(defect, max(0.0, abs(s) - g) * abs(t))
        else:
            defect = max(defect, abs(g * abs(t) + s * t))
    return defect


def residual_R(problem: VIProblem, u: DisplacementField, vh: DisplacementField) -> float:
    """Consistency residual of a comparison field against a solution.

    Evaluates the operator pairing of u against (vh - u), the load on
    (u - vh), and the contact-functional difference, all on the
    problem's mesh. vh from a coarser mesh must be prolonged first.
    """
    n = problem.dofmap.n_dofs
    if u.values.shape != (n,) or vh.values.shape != (n,):
        raise ValueError("mesh mismatch: prolong the fields to the problem mesh first")
    diff = vh.values - u.values
    au = problem.apply_operator(u.values)
    value = float(au @ diff) - float(problem.load @ diff)
    value += eval_j(problem, u, vh) - eval_j(problem, u, u)
    return value


def greens_identity_check(
    problem: VIProblem, u: DisplacementField, count: int = 20, seed: int = 0
) -> float:
    """Defect of the elementwise integration-by-parts identity.

    For piecewise-constant stress the divergence term vanishes and the
    volume term must equal the sum of element-boundary edge integrals
    (each interior and interface edge counted from both sides). Returns
    the maximum over random test fields of the defect scaled by the term
    magnitudes; exact assembly keeps it at round-off level.
    """
    if not problem.is_linear:
        raise ValueError("identity check requires a linear material law")
    mesh = problem.mesh
    eps = strain_all(mesh, u.values)
    sigma = np.empty_like(eps)
    for i, law in enumerate(problem.materials):
        rows = mesh.tri_layer == i
        sigma[rows] = stress_voigt(law, eps[rows])

    coords = mesh.tri_coords
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        v = rng.standard_normal(2 * mesh.n_nodes)
        ev = strain_all(mesh, v)
        t1 = float(
            (
                mesh.tri_areas
                * (
                    sigma[:, 0] * ev[:, 0]
                    + sigma[:, 1] * ev[:, 1]
                    + 2.0 * sigma[:, 2] * ev[:, 2]
                )
            ).sum()
        )
        t3 = 0.0
        vv = v.reshape(-1, 2)
        for a_loc, b_loc in ((0, 1), (1, 2), (2, 0)):
            pa = coords[:, a_loc]
            pb = coords[:, b_loc]
            edge = pb - pa
            # counterclockwise element: outward normal of edge a->b
            nx_, ny_ = edge[:, 1], -edge[:, 0]
            tx = sigma[:, 0] * nx_ + sigma[:, 2] * ny_
            ty = sigma[:, 2] * nx_ + sigma[:, 1] * ny_
            va = vv[mesh.triangles[:, a_loc]]
            vb = vv[mesh.triangles[:, b_loc]]
            t3 += float(
                (
                    0.5 * (tx * (va[:, 0] + vb[:, 0]) + ty * (va[:, 1] + vb[:, 1]))
                ).sum()
            )
        defect = abs(t1 - t3) / (1.0 + abs(t1) + abs(t3))
        worst = max(worst, defect)
    return worst


@dataclass
class ProblemFamily:
    """A physics setup instantiable on any mesh of a nested hierarchy."""

    base_mesh: Mesh
    build: Callable[[Mesh], VIProblem]
    description: str = ""


def convergence_study(family: ProblemFamily, levels: int, cfg) -> ConvergenceTable:
    """Solve on a nested mesh hierarchy and measure errors to a reference.

    Levels 1..levels refine the family's base mesh; the reference is
    solved two refinements beyond the finest level, and every coarse
    solution is prolonged to the reference mesh for the error norm. A
    divergent solve aborts the study and leaves a partial table (errors
    then measured against the finest completed solve).
    """
    from .solver import fixed_point_solve

    if levels < 4:
        raise ValueError(f"a study needs levels >= 4, got {levels}")
    meshes = [family.base_mesh]
    for _ in range(levels + 1):
        meshes.append(refine_uniform(meshes[-1]))

    solved_values: list[np.ndarray] = []
    solved_meshes: list[Mesh] = []
    dofs: list[int] = []
    hs: list[float] = []
    aborted = False
    note = ""
    prev = None
    for k in range(levels):
        problem = family.build(meshes[k])
        p0 = None
        if prev is not None:
            p0 = DisplacementField(
                meshes[k], prolong_nodal(meshes[k - 1], meshes[k], prev)
            )
        u, report = fixed_point_solve(problem, cfg, p0)
        if not report.converged:
            aborted = True
            note = f"aborted: solver did not converge at level {k + 1}"
            break
        solved_values.append(u.values)
        solved_meshes.append(meshes[k])
        hs.append(meshes[k].h)
        dofs.append(problem.dofmap.n_dofs)
        prev = u.values

    ref_values = None
    ref_mesh = None
    if not aborted:
        ref_mesh = meshes[levels + 1]
        ref_problem = family.build(ref_mesh)
        p0v = prolong_nodal(meshes[levels - 1], meshes[levels], prev)
        p0v = prolong_nodal(meshes[levels], ref_mesh, p0v)
        u_ref, ref_report = fixed_point_solve(
            ref_problem, cfg, DisplacementField(ref_mesh, p0v)
        )
        if not ref_report.converged:
            aborted = True
            note = "aborted: reference solve did not converge"
        else:
            ref_values = u_ref.values

    if ref_values is None:
        # fall back: measure completed levels against the finest of them
        if len(solved_values) >= 2:
            ref_mesh = solved_meshes[-1]
            ref_values = solved_values[-1]
            ref_problem = family.build(ref_mesh)
            solved_values = solved_values[:-1]
            solved_meshes = solved_meshes[:-1]
            hs = hs[:-1]
            dofs = dofs[:-1]
            reference = f"partial ({note}; finest completed level used as reference)"
        else:
            return ConvergenceTable(
                h=hs, dofs=dofs, errors=[math.nan] * len(hs),
                ratios=[], slope=math.nan,
                reference=f"partial ({note})", aborted=True,
            )
    else:
        reference = (
            f"solve on the mesh refined {levels + 1}x from base "
            f"(h = {ref_mesh.h:.6g}, {2 * ref_mesh.n_nodes} dofs)"
        )

    u_ref_field = DisplacementField(ref_mesh, ref_values)
    errors, interp_errors, residuals = [], [], []
    for mesh_k, values in zip(solved_meshes, solved_values):
        lifted = values
        m = mesh_k
        while m.nx < ref_mesh.nx:
            fine = refine_uniform(m)
            lifted = prolong_nodal(m, fine, lifted)
            m = fine
        errors.append(v_norm(ref_mesh, ref_values - lifted))
        restricted = ref_values
        m = ref_mesh
        while m.nx > mesh_k.nx:
            coarser = _coarsen_lookup(meshes, m)
            restricted = restrict_nodal(m, coarser, restricted)
            m = coarser
        lifted_interp = restricted
        m = mesh_k
        while m.nx < ref_mesh.nx:
            fine = refine_uniform(m)
            lifted_interp = prolong_nodal(m, fine, lifted_interp)
            m = fine
        interp_errors.append(v_norm(ref_mesh, ref_values - lifted_interp))
        residuals.append(
            residual_R(
                ref_problem, u_ref_field, DisplacementField(ref_mesh, lifted_interp)
            )
        )

    ratios = [errors[k + 1] / errors[k] for k in range(len(errors) - 1)]
    if len(errors) >= 2 and all(e > 0 for e in errors):
        coeffs = np.polyfit(np.log(hs), np.log(errors), 1)
        slope = float(coeffs[0])
    else:
        slope = math.nan
    return ConvergenceTable(
        h=hs, dofs=dofs, errors=errors, ratios=ratios, slope=slope,
        reference=reference, interp_errors=interp_errors,
        residuals=residuals, aborted=aborted,
    )


def _coarsen_lookup(meshes: list[Mesh], fine: Mesh) -> Mesh:
    for m in meshes:
        if 2 * m.nx == fine.nx:
            return m
    raise ValueError("mesh hierarchy does not contain the coarser mesh")


def interpolation_error_vnorm(
    mesh: Mesh,
    fn: Callable[[float, float], tuple[float, float]],
    strain_fn: Callable[[float, float], tuple[float, float, float]],
) -> float:
    """Strain-norm distance between a smooth field and its interpolant.

    strain_fn returns the analytic strain components (xx, yy, xy) at a
    point; the squared difference is integrated with the edge-midpoint
    rule, exact when the analytic strain is linear per triangle.
    """
    from .assembly import interpolate_nodal

    u = interpolate_nodal(mesh, fn)
    e_h = strain_all(mesh, u.values)
    coords = mesh.tri_coords
    mids = np.stack(
        [
            0.5 * (coords[:, 0] + coords[:, 1]),
            0.5 * (coords[:, 1] + coords[:, 2]),
            0.5 * (coords[:, 2] + coords[:, 0]),
        ],
        axis=1,
    )
    total = 0.0
    for t in range(mesh.n_triangles):
        acc = 0.0
        for q in range(3):
            exx, eyy, exy = strain_fn(mids[t, q, 0], mids[t, q, 1])
            dxx = exx - e_h[t, 0]
            dyy = eyy - e_h[t, 1]
            dxy = exy - e_h[t, 2]
            acc += dxx * dxx + dyy * dyy + 2.0 * dxy * dxy
        total += mesh.tri_areas[t] * acc / 3.0
    return math.sqrt(total)


def h2_surrogate_norm(mesh: Mesh, fn: Callable[[float, float], tuple[float, float]]) -> float:
    """Grid second-difference surrogate for the curvature seminorm.

    Central second differences per layer grid, summed with cell-area
    weights. Stands in for the analytic curvature norm that the
    interpolation constant is measured against.
    """
    total = 0.0
    for i, spec in enumerate(mesh.layers):
        nx, ny = mesh.nx, spec.ny
        vals = np.empty((ny + 1, nx + 1, 2))
        for r in range(ny + 1):
            for c in range(nx + 1):
                x, y = mesh.nodes[mesh.grid_node(i, c, r)]
                vals[r, c] = fn(x, y)
        dx = spec.width / nx
        dy = spec.thickness / ny
        cell = dx * dy
        if nx >= 2:
            dxx = (vals[:, :-2] - 2 * vals[:, 1:-1] + vals[:, 2:]) / dx**2
            total += cell * float((dxx**2).sum())
        if ny >= 2:
            dyy = (vals[:-2] - 2 * vals[1:-1] + vals[2:]) / dy**2
            total += cell * float((dyy**2).sum())
        dxy = (vals[1:, 1:] - vals[1:, :-1] - vals[:-1, 1:] + vals[:-1, :-1]) / (dx * dy)
        total += 2.0 * cell * float((dxy**2).sum())
    return math.sqrt(total)
