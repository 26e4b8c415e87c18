"""Discrete variational objects on a layer stack.

Assembles the stiffness form, the load functional, the friction
functional, the interface nonpenetration constraints, and the stress
recovery that feeds interlayer friction bounds. Displacements are P1 per
layer with doubled nodes along each interface, so interlayer jumps are
exact nodal differences.

Sign conventions (2-D): the outward normal on the bottom edge of a layer
is (0, -1), on the top edge (0, +1). The scalar normal displacement on a
bottom edge is therefore -u_y (positive = pressing downward), the scalar
tangential displacement is u_x. The normal jump across interface i is
u_y(lower side) - u_y(upper side); nonpenetration requires it <= 0. The
tangential jump is u_x(upper side) - u_x(lower side).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .laws import (
    FrictionLaw,
    MaterialLaw,
    friction_bound,
    normal_compliance,
    shear_scale,
    stress_voigt,
)
from .mesh import Mesh, audit_mesh, dirichlet_nodes


@dataclass(frozen=True)
class DofMap:
    """Node-to-dof numbering: node n owns dofs (2n, 2n+1) = (x, y)."""

    n_nodes: int
    dirichlet_dofs: np.ndarray
    free_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @staticmethod
    def node_dofs(node: int) -> tuple[int, int]:
        return 2 * node, 2 * node + 1

    @classmethod
    def build(cls, mesh: Mesh, dirichlet: np.ndarray | None = None) -> "DofMap":
        if dirichlet is None:
            nodes = dirichlet_nodes(mesh)
            dirichlet = np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))
        else:
            dirichlet = np.unique(np.asarray(dirichlet, dtype=np.int64))
        mask = np.ones(2 * mesh.n_nodes, dtype=bool)
        mask[dirichlet] = False
        return cls(
            n_nodes=mesh.n_nodes,
            dirichlet_dofs=dirichlet,
            free_dofs=np.nonzero(mask)[0].astype(np.int64),
        )


@dataclass
class DisplacementField:
    """Nodal displacement vector, stored dof-ordered (x0, y0, x1, y1, ...)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.shape != (2 * self.mesh.n_nodes,):
            raise ValueError(
                f"field length {self.values.shape} does not match mesh with "
                f"{self.mesh.n_nodes} nodes"
            )

    @classmethod
    def zero(cls, mesh: Mesh) -> "DisplacementField":
        return cls(mesh, np.zeros(2 * mesh.n_nodes))

    @classmethod
    def from_vectors(cls, mesh: Mesh, vecs: np.ndarray) -> "DisplacementField":
        return cls(mesh, np.asarray(vecs, dtype=float).reshape(-1))

    def as_vectors(self) -> np.ndarray:
        """(n_nodes, 2) view of the same data."""
        return self.values.reshape(-1, 2)


@dataclass
class StressField:
    """Piecewise-constant stress with recovered interface tractions.

    tri_stress rows hold (xx, yy, xy) per triangle. interface_normal[i]
    and interface_tangential[i] hold the recovered normal and tangential
    traction at the pairs of interface i, ordered like the pair list.
    """

    mesh: Mesh
    tri_stress: np.ndarray
    interface_normal: list[np.ndarray] = field(default_factory=list)
    interface_tangential: list[np.ndarray] = field(default_factory=list)


def strain_all(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Constant strain per triangle, rows (e_xx, e_yy, e_xy)."""
    vecs = values.reshape(-1, 2)
    u = vecs[mesh.triangles]  # (M, 3, 2)
    g = mesh.tri_grads  # (M, 3, 2)
    out = np.empty((mesh.n_triangles, 3))
    out[:, 0] = (u[:, :, 0] * g[:, :, 0]).sum(axis=1)
    out[:, 1] = (u[:, :, 1] * g[:, :, 1]).sum(axis=1)
    out[:, 2] = 0.5 * (u[:, :, 0] * g[:, :, 1] + u[:, :, 1] * g[:, :, 0]).sum(axis=1)
    return out


def strain(triangle: int, u: DisplacementField) -> np.ndarray:
    """Strain tensor of the P1 interpolant on one triangle."""
    mesh = u.mesh
    if not 0 <= triangle < mesh.n_triangles:
        raise IndexError(f"triangle {triangle} not in mesh")
    if mesh.tri_areas[triangle] <= 0:
        raise ValueError(f"triangle {triangle} is degenerate")
    e = strain_all(mesh, u.values)[triangle]
    return np.array([[e[0], e[2]], [e[2], e[1]]])


def _edge_rows(mesh: Mesh, family: int, layer: int) -> list[tuple[int, int]]:
    return [
        edge
        for edge, (fam, lay) in mesh.boundary_edges.items()
        if fam == family and lay == layer
    ]


def _trapezoid_weights(mesh: Mesh, nodes: np.ndarray) -> np.ndarray:
    """Trapezoid-rule weight of each node along a polyline of nodes."""
    coords = mesh.nodes[nodes]
    seg = np.linalg.norm(np.diff(coords, axis=0), axis=1)
    w = np.zeros(len(nodes))
    w[:-1] += 0.5 * seg
    w[1:] += 0.5 * seg
    return w


class VIProblem:
    """Assembled discrete contact problem.

    The stiffness form, load vector, and constraint rows live on the full
    dof set; Dirichlet elimination happens where systems are solved. For
    a nonlinear material the operator is evaluated through the secant
    matrix, which reproduces the nonlinear stress exactly because P1
    strain is constant per triangle.
    """

    def __init__(
        self,
        mesh: Mesh,
        dofmap: DofMap,
        materials: tuple[MaterialLaw, ...],
        interface_laws: tuple[FrictionLaw, ...],
        foundation_law: FrictionLaw,
        load: np.ndarray,
    ):
        self.mesh = mesh
        self.dofmap = dofmap
        self.materials = materials
        self.interface_laws = interface_laws
        self.foundation_law = foundation_law
        self.load = load
        self.foundation_nodes = mesh.bottom_row(mesh.n_layers - 1)
        self.foundation_weights = _trapezoid_weights(mesh, self.foundation_nodes)
        self.interface_weights = [
            _trapezoid_weights(mesh, pairs[:, 0]) for pairs in mesh.interface_pairs
        ]

    @property
    def is_linear(self) -> bool:
        return all(m.is_linear for m in self.materials)

    @cached_property
    def a_matrix(self) -> sp.csr_matrix:
        """Full stiffness matrix (linear law, or secant at zero strain)."""
        return self.matrix_at(np.zeros(self.dofmap.n_dofs))

    def matrix_at(self, values: np.ndarray) -> sp.csr_matrix:
        """Secant stiffness with the shear multiplier frozen at this state."""
        factors = None
        if not self.is_linear:
            eps = strain_all(self.mesh, values)
            factors = np.empty(self.mesh.n_triangles)
            for i, law in enumerate(self.materials):
                rows = self.mesh.tri_layer == i
                factors[rows] = shear_scale(law, eps[rows])
        return _assemble_stiffness(self.mesh, self.materials, factors)

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Stiffness restricted to free dofs; symmetric positive definite."""
        f = self.dofmap.free_dofs
        return self.a_matrix[np.ix_(f, f)].tocsr()

    def apply_operator(self, values: np.ndarray) -> np.ndarray:
        """Action of the (possibly nonlinear) elasticity operator."""
        if self.is_linear:
            return self.a_matrix @ values
        return self.matrix_at(values) @ values

    @cached_property
    def constraint_matrix(self) -> sp.csr_matrix:
        """Rows evaluate the normal jump at every interface pair.

        Row r of B gives (Bu)_r = u_y(lower) - u_y(upper); feasibility of
        the nonpenetration set is B u <= 0.
        """
        rows, cols, vals = [], [], []
        r = 0
        for pairs in self.mesh.interface_pairs:
            for upper, lower in pairs:
                rows += [r, r]
                cols += [2 * int(lower) + 1, 2 * int(upper) + 1]
                vals += [1.0, -1.0]
                r += 1
        n = self.dofmap.n_dofs
        return sp.csr_matrix((vals, (rows, cols)), shape=(r, n))

    @property
    def pair_slices(self) -> list[slice]:
        """Constraint-row range of each interface."""
        out, start = [], 0
        for pairs in self.mesh.interface_pairs:
            out.append(slice(start, start + len(pairs)))
            start += len(pairs)
        return out


def _material_d_matrices(
    mesh: Mesh, materials: Sequence[MaterialLaw], shear_factors: np.ndarray | None
) -> np.ndarray:
    """(M, 3, 3) matrices mapping strain components to W-weighted stress.

    Built so that e_v^T D e_w equals sigma(e_v):e_w with the xy component
    counted twice (Frobenius product of symmetric tensors).
    """
    d = np.zeros((mesh.n_triangles, 3, 3))
    for i, law in enumerate(materials):
        rows = mesh.tri_layer == i
        two_mu = 2.0 * law.lame_mu
        if shear_factors is not None:
            two_mu = two_mu * shear_factors[rows]
        lam = law.lame_lambda
        d[rows, 0, 0] = two_mu + lam
        d[rows, 1, 1] = two_mu + lam
        d[rows, 0, 1] = lam
        d[rows, 1, 0] = lam
        d[rows, 2, 2] = 2.0 * two_mu
    return d


def _strain_b_matrices(mesh: Mesh) -> np.ndarray:
    """(M, 3, 6) operators taking element dof vectors to strain components.

    Element dofs are ordered (x0, y0, x1, y1, x2, y2) over the triangle's
    local vertices.
    """
    g = mesh.tri_grads
    b = np.zeros((mesh.n_triangles, 3, 6))
    for a in range(3):
        b[:, 0, 2 * a] = g[:, a, 0]
        b[:, 1, 2 * a + 1] = g[:, a, 1]
        b[:, 2, 2 * a] = 0.5 * g[:, a, 1]
        b[:, 2, 2 * a + 1] = 0.5 * g[:, a, 0]
    return b


def _assemble_stiffness(
    mesh: Mesh, materials: Sequence[MaterialLaw], shear_factors: np.ndarray | None
) -> sp.csr_matrix:
    b = _strain_b_matrices(mesh)
    d = _material_d_matrices(mesh, materials, shear_factors)
    ke = np.einsum("mia,mij,mjb,m->mab", b, d, b, mesh.tri_areas, optimize=True)
    dofs = np.empty((mesh.n_triangles, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    mat = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n))
    return mat.tocsr()


def _volume_load(mesh: Mesh, f0: Sequence[np.ndarray] | None) -> np.ndarray:
    out = np.zeros(2 * mesh.n_nodes)
    if f0 is None:
        return out
    if len(f0) != mesh.n_layers:
        raise ValueError(
            f"body-force count {len(f0)} does not match {mesh.n_layers} layers"
        )
    for i, f in enumerate(f0):
        f = np.asarray(f, dtype=float)
        if f.shape != (2,):
            raise ValueError("per-layer body force must be a 2-vector")
        if not f.any():
            continue
        rows = np.nonzero(mesh.tri_layer == i)[0]
        flat = mesh.triangles[rows].ravel()
        share = np.repeat(mesh.tri_areas[rows] / 3.0, 3)
        np.add.at(out, 2 * flat, share * f[0])
        np.add.at(out, 2 * flat + 1, share * f[1])
    return out


def _surface_load(mesh: Mesh, f2: np.ndarray | None) -> np.ndarray:
    """Traction on the top edge of the top layer, midpoint edge quadrature.

    f2 is a constant 2-vector or a (len(top_row), 2) table of nodal
    tractions ordered left to right.
    """
    out = np.zeros(2 * mesh.n_nodes)
    if f2 is None:
        return out
    top = mesh.top_row(0)
    f2 = np.asarray(f2, dtype=float)
    if f2.shape == (2,):
        table = np.broadcast_to(f2, (len(top), 2))
    elif f2.shape == (len(top), 2):
        table = f2
    else:
        raise ValueError(
            f"surface traction must be a 2-vector or a ({len(top)}, 2) table, "
            f"got shape {f2.shape}"
        )
    coords = mesh.nodes[top]
    for j in range(len(top) - 1):
        a, b = top[j], top[j + 1]
        length = np.linalg.norm(coords[j + 1] - coords[j])
        mid = 0.5 * (table[j] + table[j + 1])
        for node in (a, b):
            out[2 * node] += 0.5 * length * mid[0]
            out[2 * node + 1] += 0.5 * length * mid[1]
    return out


def assemble(
    mesh: Mesh,
    materials: Sequence[MaterialLaw],
    f0: Sequence[np.ndarray] | None,
    f2: np.ndarray | None,
    interface_laws: Sequence[FrictionLaw],
    foundation_law: FrictionLaw,
    dirichlet_dofs: np.ndarray | None = None,
) -> VIProblem:
    """Assemble the discrete problem on a valid mesh.

    dirichlet_dofs overrides the default clamped-sides condition; pass
    an explicit dof list to model other supports (rollers, pins).
    """
    violations = audit_mesh(mesh)
    if violations:
        raise ValueError("mesh fails audit: " + "; ".join(violations[:3]))
    materials = tuple(materials)
    if len(materials) != mesh.n_layers:
        raise ValueError(
            f"material count {len(materials)} does not match {mesh.n_layers} layers"
        )
    interface_laws = tuple(interface_laws)
    if len(interface_laws) != mesh.n_layers - 1:
        raise ValueError(
            f"interface law count {len(interface_laws)} does not match "
            f"{mesh.n_layers - 1} interfaces"
        )
    dofmap = DofMap.build(mesh, dirichlet_dofs)
    load = _volume_load(mesh, f0) + _surface_load(mesh, f2)
    return VIProblem(
        mesh=mesh,
        dofmap=dofmap,
        materials=materials,
        interface_laws=interface_laws,
        foundation_law=foundation_law,
        load=load,
    )


def jump_normal(mesh: Mesh, u: DisplacementField, i: int) -> np.ndarray:
    """Normal jump at the pairs of interface i; positive = penetration."""
    pairs = _pairs(mesh, i)
    uy = u.values[1::2]
    return uy[pairs[:, 1]] - uy[pairs[:, 0]]


def jump_tangential(mesh: Mesh, u: DisplacementField, i: int) -> np.ndarray:
    """Relative tangential slip at the pairs of interface i."""
    pairs = _pairs(mesh, i)
    ux = u.values[0::2]
    return ux[pairs[:, 0]] - ux[pairs[:, 1]]


def _pairs(mesh: Mesh, i: int) -> np.ndarray:
    if not 0 <= i < len(mesh.interface_pairs):
        raise IndexError(
            f"interface {i} out of range for {len(mesh.interface_pairs)} interfaces"
        )
    return mesh.interface_pairs[i]


def _node_averaged_stress(
    problem: VIProblem, values: np.ndarray, layer: int, nodes: np.ndarray
) -> np.ndarray:
    """Area-weighted average of adjacent layer-owned element stresses.

    Returns (len(nodes), 3) stress components at each requested node,
    using only triangles of the given layer.
    """
    mesh = problem.mesh
    eps = strain_all(mesh, values)
    law = problem.materials[layer]
    rows = np.nonzero(mesh.tri_layer == layer)[0]
    sigma = stress_voigt(law, eps[rows])
    areas = mesh.tri_areas[rows]
    acc = np.zeros((mesh.n_nodes, 3))
    wsum = np.zeros(mesh.n_nodes)
    flat = mesh.triangles[rows].ravel()
    np.add.at(wsum, flat, np.repeat(areas, 3))
    np.add.at(acc, flat, np.repeat(areas[:, None] * sigma, 3, axis=0))
    nodes = np.asarray(nodes)
    if (wsum[nodes] == 0).any():
        raise ValueError(f"node without incident layer-{layer} triangle")
    return acc[nodes] / wsum[nodes, None]


def recover_interface_stress(
    problem: VIProblem, u: DisplacementField, i: int
) -> tuple[np.ndarray, np.ndarray]:
    """Recovered traction at the pairs of interface i, from the upper layer.

    Returns (normal, tangential) arrays. With the bottom-edge outward
    normal (0, -1) the normal traction is sigma_yy (negative in
    compression) and the tangential one is -sigma_xy.
    """
    pairs = _pairs(problem.mesh, i)
    sigma = _node_averaged_stress(problem, u.values, i, pairs[:, 0])
    return sigma[:, 1], -sigma[:, 2]


def recover_foundation_stress(
    problem: VIProblem, u: DisplacementField
) -> tuple[np.ndarray, np.ndarray]:
    """Recovered traction along the foundation contact line."""
    mesh = problem.mesh
    sigma = _node_averaged_stress(
        problem, u.values, mesh.n_layers - 1, problem.foundation_nodes
    )
    return sigma[:, 1], -sigma[:, 2]


def compute_stress(problem: VIProblem, u: DisplacementField) -> StressField:
    """Element stresses plus recovered tractions on every interface."""
    eps = strain_all(problem.mesh, u.values)
    tri_stress = np.empty_like(eps)
    for i, law in enumerate(problem.materials):
        rows = problem.mesh.tri_layer == i
        tri_stress[rows] = stress_voigt(law, eps[rows])
    normal, tangential = [], []
    for i in range(len(problem.mesh.interface_pairs)):
        sn, st = recover_interface_stress(problem, u, i)
        normal.append(sn)
        tangential.append(st)
    return StressField(
        mesh=problem.mesh,
        tri_stress=tri_stress,
        interface_normal=normal,
        interface_tangential=tangential,
    )


def friction_bound_data(
    problem: VIProblem, p: DisplacementField
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Friction data frozen at the state p.

    Returns (foundation_pressure, foundation_bound, interface_bounds):
    the foundation contact pressure at penetration -p_y per foundation
    node, the tangential threshold there, and the threshold per pair on
    each interface, fed by the recovered compressive normal stress. An
    interface region in tension gets a zero bound (free slip).
    """
    p_beta = -p.values[1::2][problem.foundation_nodes]
    pressure = np.asarray(normal_compliance(problem.foundation_law, p_beta))
    fnd_bound = np.asarray(friction_bound(problem.foundation_law, pressure))
    iface_bounds = []
    for i, law in enumerate(problem.interface_laws):
        sigma_n, _ = recover_interface_stress(problem, p, i)
        iface_bounds.append(
            np.asarray(friction_bound(law, np.maximum(0.0, -sigma_n)))
        )
    return pressure, fnd_bound, iface_bounds


def eval_j(problem: VIProblem, p: DisplacementField, w: DisplacementField) -> float:
    """Contact functional: compliance work plus weighted slip norms.

    First slot freezes the friction bounds, second slot is evaluated.
    Edge integrals use the trapezoid rule on nodal values.
    """
    if p.mesh is not problem.mesh or w.mesh is not problem.mesh:
        raise ValueError("fields must live on the problem's mesh")
    pressure, fnd_bound, iface_bounds = friction_bound_data(problem, p)
    wt = problem.foundation_weights
    w_beta = -w.values[1::2][problem.foundation_nodes]
    w_eta = w.values[0::2][problem.foundation_nodes]
    total = float((wt * pressure * w_beta).sum())
    total += float((wt * fnd_bound * np.abs(w_eta)).sum())
    for i, bound in enumerate(iface_bounds):
        slip = jump_tangential(problem.mesh, w, i)
        total += float((problem.interface_weights[i] * bound * np.abs(slip)).sum())
    return total


def project_feasible(problem: VIProblem, values: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the nonpenetration constraint set.

    Interface pairs are disjoint, so the projection splits the violation
    evenly between the two sides of each penetrating pair.
    """
    out = np.asarray(values, dtype=float).copy()
    for pairs in problem.mesh.interface_pairs:
        up = 2 * pairs[:, 0] + 1
        lo = 2 * pairs[:, 1] + 1
        gap = out[lo] - out[up]
        shift = 0.5 * np.maximum(0.0, gap)
        out[lo] -= shift
        out[up] += shift
    return out


def interpolate_nodal(
    mesh: Mesh, fn: Callable[[float, float], Sequence[float]]
) -> DisplacementField:
    """Nodal interpolant of an analytic displacement field."""
    vals = np.array([fn(x, y) for x, y in mesh.nodes], dtype=float)
    if vals.shape != (mesh.n_nodes, 2):
        raise ValueError("field must return a 2-vector at every node")
    return DisplacementField.from_vectors(mesh, vals)


def v_inner(mesh: Mesh, u_values: np.ndarray, v_values: np.ndarray) -> float:
    """Strain inner product (u, v) = sum over layers of (eps(u), eps(v))."""
    eu = strain_all(mesh, u_values)
    ev = strain_all(mesh, v_values)
    prod = eu[:, 0] * ev[:, 0] + eu[:, 1] * ev[:, 1] + 2.0 * eu[:, 2] * ev[:, 2]
    return float((mesh.tri_areas * prod).sum())


def v_norm(mesh: Mesh, values: np.ndarray) -> float:
    return float(np.sqrt(max(0.0, v_inner(mesh, values, values))))


def energy_norm(problem: VIProblem, u: DisplacementField) -> float:
    """Strain norm of the field; the norm all error estimates use."""
    return v_norm(problem.mesh, u.values)


def prolong_nodal(coarse: Mesh, fine: Mesh, values: np.ndarray) -> np.ndarray:
    """Transfer a dof vector to the once-refined mesh by P1 interpolation.

    Exact embedding of the coarse FE space: even-even fine grid nodes
    copy the coarse value, edge midpoints average their edge endpoints,
    and cell centers average the endpoints of the cell's split diagonal.
    """
    if fine.nx != 2 * coarse.nx or fine.n_layers != coarse.n_layers:
        raise ValueError("fine mesh is not the uniform refinement of the coarse one")
    cv = values.reshape(-1, 2)
    out = np.empty((fine.n_nodes, 2))
    for i, spec in enumerate(coarse.layers):
        for row in range(2 * spec.ny + 1):
            for col in range(2 * coarse.nx + 1):
                fn = fine.grid_node(i, col, row)
                j, r = col // 2, row // 2
                if col % 2 == 0 and row % 2 == 0:
                    out[fn] = cv[coarse.grid_node(i, j, r)]
                elif row % 2 == 0:
                    a = cv[coarse.grid_node(i, j, r)]
                    b = cv[coarse.grid_node(i, j + 1, r)]
                    out[fn] = 0.5 * (a + b)
                elif col % 2 == 0:
                    a = cv[coarse.grid_node(i, j, r)]
                    b = cv[coarse.grid_node(i, j, r + 1)]
                    out[fn] = 0.5 * (a + b)
                else:
                    # center of cell (j, r), on its bottom-left to
                    # top-right split diagonal
                    a = cv[coarse.grid_node(i, j, r)]
                    b = cv[coarse.grid_node(i, j + 1, r + 1)]
                    out[fn] = 0.5 * (a + b)
    return out.reshape(-1)


def restrict_nodal(fine: Mesh, coarse: Mesh, values: np.ndarray) -> np.ndarray:
    """Transfer a dof vector back to the coarse mesh by nodal injection.

    Coarse nodes are a subset of the fine grid, so this is pointwise
    interpolation onto the coarse space; it inverts prolong_nodal on
    coarse fields.
    """
    if fine.nx != 2 * coarse.nx or fine.n_layers != coarse.n_layers:
        raise ValueError("fine mesh is not the uniform refinement of the coarse one")
    fv = values.reshape(-1, 2)
    out = np.empty((coarse.n_nodes, 2))
    for i, spec in enumerate(coarse.layers):
        for row in range(spec.ny + 1):
            for col in range(coarse.nx + 1):
                out[coarse.grid_node(i, col, row)] = fv[
                    fine.grid_node(i, 2 * col, 2 * row)
                ]
    return out.reshape(-1)
