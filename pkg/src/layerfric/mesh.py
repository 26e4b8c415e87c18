"""Structured triangular meshes of stacked rectangular layers.

Each layer of the stack is a rectangle of common width, meshed by an
(nx x ny) grid of cells split into two triangles along a consistent
diagonal. Layers are stacked vertically: layer 0 on top, the last layer
resting on the foundation at y = 0. Adjacent layers meet node-to-node,
but the coinciding nodes are distinct so that displacement may jump
across the interface.

Boundary edges are tagged by family:

* ``EDGE_SIDE``   - the two vertical sides of a layer (clamped),
* ``EDGE_TOP``    - the top edge (loaded surface or contact from above),
* ``EDGE_BOTTOM`` - the bottom edge (interface below, or foundation).

Coordinates are arranged so that refinement by ``refine_uniform`` keeps
every coarse node bit-identical on the fine mesh and halves the element
diameter exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

EDGE_SIDE = 1
EDGE_TOP = 2
EDGE_BOTTOM = 3

# Minimum triangle area relative to h^2. Catches collapsed or inverted
# triangles while admitting the thin cells of high-aspect structured
# stacks (aspect ratios up to a few thousand).
SHAPE_RHO = 1e-4


@dataclass(frozen=True)
class LayerSpec:
    """Geometry of one layer: common stack width, thickness, element rows."""

    width: float
    thickness: float
    ny: int

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ValueError(f"layer width must be positive, got {self.width}")
        if self.thickness <= 0:
            raise ValueError(f"layer thickness must be positive, got {self.thickness}")
        if self.ny < 1:
            raise ValueError(f"layer ny must be >= 1, got {self.ny}")


class Mesh:
    """Conforming triangulation of a layer stack.

    Attributes
    ----------
    nodes : (N, 2) float array of coordinates.
    triangles : (M, 3) int array of node triples, counterclockwise.
    tri_layer : (M,) int array, owning layer of each triangle.
    boundary_edges : dict mapping sorted node pair -> (family, layer).
    interface_pairs : list over interfaces k (between layer k and k+1) of
        (P, 2) int arrays; column 0 is the node on the bottom edge of the
        upper layer, column 1 the coinciding node on the top edge of the
        lower layer.
    h : maximum element diameter.
    """

    def __init__(
        self,
        layers: tuple[LayerSpec, ...],
        nx: int,
        nodes: np.ndarray,
        triangles: np.ndarray,
        tri_layer: np.ndarray,
        boundary_edges: dict[tuple[int, int], tuple[int, int]],
        interface_pairs: list[np.ndarray],
        h: float,
        node_offsets: tuple[int, ...],
    ):
        self.layers = layers
        self.nx = nx
        self.nodes = nodes
        self.triangles = triangles
        self.tri_layer = tri_layer
        self.boundary_edges = boundary_edges
        self.interface_pairs = interface_pairs
        self.h = h
        self._node_offsets = node_offsets

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def width(self) -> float:
        return self.layers[0].width

    def grid_node(self, layer: int, col: int, row: int) -> int:
        """Global node index at grid position (col, row) of a layer.

        Rows count from the bottom edge of the layer upward.
        """
        spec = self.layers[layer]
        if not (0 <= col <= self.nx and 0 <= row <= spec.ny):
            raise IndexError(f"grid position ({col}, {row}) outside layer {layer}")
        return self._node_offsets[layer] + row * (self.nx + 1) + col

    def layer_nodes(self, layer: int) -> np.ndarray:
        """All node indices of a layer, grid-ordered."""
        start = self._node_offsets[layer]
        count = (self.nx + 1) * (self.layers[layer].ny + 1)
        return np.arange(start, start + count)

    def bottom_row(self, layer: int) -> np.ndarray:
        """Node indices along the bottom edge of a layer, left to right."""
        return np.array([self.grid_node(layer, c, 0) for c in range(self.nx + 1)])

    def top_row(self, layer: int) -> np.ndarray:
        """Node indices along the top edge of a layer, left to right."""
        ny = self.layers[layer].ny
        return np.array([self.grid_node(layer, c, ny) for c in range(self.nx + 1)])

    @cached_property
    def tri_coords(self) -> np.ndarray:
        """(M, 3, 2) vertex coordinates per triangle."""
        return self.nodes[self.triangles]

    @cached_property
    def tri_areas(self) -> np.ndarray:
        c = self.tri_coords
        d1 = c[:, 1] - c[:, 0]
        d2 = c[:, 2] - c[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def tri_grads(self) -> np.ndarray:
        """(M, 3, 2) gradients of the three nodal hat functions per triangle."""
        c = self.tri_coords
        grads = np.empty((self.n_triangles, 3, 2))
        twice_area = 2.0 * self.tri_areas
        for local, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
            # grad of hat_i is perpendicular to the opposite edge j->k
            ex = c[:, k, 0] - c[:, j, 0]
            ey = c[:, k, 1] - c[:, j, 1]
            grads[:, local, 0] = -ey / twice_area
            grads[:, local, 1] = ex / twice_area
        return grads


def _layer_bases(layers: tuple[LayerSpec, ...]) -> list[float]:
    """Base (bottom) y-coordinate of each layer; last layer sits at y = 0."""
    n = len(layers)
    bases = [0.0] * n
    for i in range(n - 2, -1, -1):
        bases[i] = bases[i + 1] + layers[i + 1].thickness
    return bases


def _formula_h(layers: tuple[LayerSpec, ...], nx: int) -> float:
    # All cells of a layer are congruent; the diameter is the cell diagonal.
    return max(math.hypot(s.width / nx, s.thickness / s.ny) for s in layers)


def build_layered_mesh(layers: list[LayerSpec] | tuple[LayerSpec, ...], nx: int) -> Mesh:
    """Build the structured stack mesh.

    Parameters
    ----------
    layers : layer specs ordered top to bottom; all widths must agree.
    nx : number of element columns (shared by every layer).
    """
    layers = tuple(layers)
    if not layers:
        raise ValueError("at least one layer is required")
    if nx < 1:
        raise ValueError(f"nx must be >= 1, got {nx}")
    width = layers[0].width
    for i, spec in enumerate(layers):
        if spec.width != width:
            raise ValueError(
                f"all layers must share one width: layer {i} has {spec.width}, "
                f"layer 0 has {width}"
            )

    bases = _layer_bases(layers)
    node_chunks: list[np.ndarray] = []
    offsets: list[int] = []
    total = 0
    for i, spec in enumerate(layers):
        offsets.append(total)
        cols = np.arange(nx + 1)
        rows = np.arange(spec.ny + 1)
        # The (j/nx, k/ny) form keeps coarse grid coordinates bit-identical
        # under nx, ny doubling.
        x = width * (cols / nx)
        y = bases[i] + spec.thickness * (rows / spec.ny)
        xx, yy = np.meshgrid(x, y)  # row-major: row index first
        node_chunks.append(np.column_stack([xx.ravel(), yy.ravel()]))
        total += (nx + 1) * (spec.ny + 1)
    nodes = np.vstack(node_chunks)

    triangles: list[tuple[int, int, int]] = []
    tri_layer: list[int] = []
    boundary_edges: dict[tuple[int, int], tuple[int, int]] = {}

    def node_at(layer: int, col: int, row: int) -> int:
        return offsets[layer] + row * (nx + 1) + col

    for i, spec in enumerate(layers):
        ny = spec.ny
        for k in range(ny):
            for j in range(nx):
                ll = node_at(i, j, k)
                lr = node_at(i, j + 1, k)
                ur = node_at(i, j + 1, k + 1)
                ul = node_at(i, j, k + 1)
                triangles.append((ll, lr, ur))
                triangles.append((ll, ur, ul))
                tri_layer.extend((i, i))
        for j in range(nx):
            a, b = node_at(i, j, 0), node_at(i, j + 1, 0)
            boundary_edges[(min(a, b), max(a, b))] = (EDGE_BOTTOM, i)
            a, b = node_at(i, j, ny), node_at(i, j + 1, ny)
            boundary_edges[(min(a, b), max(a, b))] = (EDGE_TOP, i)
        for k in range(ny):
            a, b = node_at(i, 0, k), node_at(i, 0, k + 1)
            boundary_edges[(min(a, b), max(a, b))] = (EDGE_SIDE, i)
            a, b = node_at(i, nx, k), node_at(i, nx, k + 1)
            boundary_edges[(min(a, b), max(a, b))] = (EDGE_SIDE, i)

    interface_pairs = []
    for i in range(len(layers) - 1):
        upper = [node_at(i, j, 0) for j in range(nx + 1)]
        lower = [node_at(i + 1, j, layers[i + 1].ny) for j in range(nx + 1)]
        interface_pairs.append(np.column_stack([upper, lower]).astype(np.int64))

    return Mesh(
        layers=layers,
        nx=nx,
        nodes=nodes,
        triangles=np.asarray(triangles, dtype=np.int64),
        tri_layer=np.asarray(tri_layer, dtype=np.int64),
        boundary_edges=boundary_edges,
        interface_pairs=interface_pairs,
        h=_formula_h(layers, nx),
        node_offsets=tuple(offsets),
    )


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 similar ones; h halves exactly.

    Realized by rebuilding the structured grid with doubled nx and ny,
    which reproduces the 4-way split for this family of meshes and keeps
    coarse node coordinates bit-identical on the fine mesh.
    """
    fine_layers = tuple(
        LayerSpec(width=s.width, thickness=s.thickness, ny=2 * s.ny) for s in mesh.layers
    )
    return build_layered_mesh(fine_layers, 2 * mesh.nx)


def audit_mesh(mesh: Mesh) -> list[str]:
    """Check every mesh invariant; return a list of violation messages.

    An empty list means the mesh is valid. Each message names the violated
    invariant and the offending entity.
    """
    violations: list[str] = []
    width = mesh.width
    coord_scale = max(width, mesh.nodes[:, 1].max() - mesh.nodes[:, 1].min(), 1.0)
    tol = 1e-12 * coord_scale

    areas = mesh.tri_areas
    min_area = SHAPE_RHO * mesh.h**2
    for t in np.nonzero(areas < min_area)[0]:
        violations.append(
            f"degenerate triangle: triangle {t} area {areas[t]:.3e} "
            f"below {SHAPE_RHO}*h^2 = {min_area:.3e}"
        )

    # Edge incidence per layer: interior edges are shared by exactly two
    # triangles of the layer, single-incidence edges must carry a tag.
    for i in range(mesh.n_layers):
        edge_count: dict[tuple[int, int], int] = {}
        for t in np.nonzero(mesh.tri_layer == i)[0]:
            tri = mesh.triangles[t]
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                edge_count[key] = edge_count.get(key, 0) + 1
        for key, count in edge_count.items():
            if count > 2:
                violations.append(
                    f"nonconforming edge: edge {key} of layer {i} shared by {count} triangles"
                )
            elif count == 1:
                tag = mesh.boundary_edges.get(key)
                if tag is None:
                    violations.append(f"untagged boundary edge: edge {key} of layer {i}")
                elif tag[1] != i:
                    violations.append(
                        f"boundary tag layer mismatch: edge {key} tagged for layer {tag[1]}, "
                        f"belongs to layer {i}"
                    )
        for key, (family, layer) in mesh.boundary_edges.items():
            if layer == i and edge_count.get(key, 0) != 1:
                violations.append(
                    f"tag on non-boundary edge: edge {key} of layer {i} (family {family})"
                )

    # Tag families must match geometry.
    bases = _layer_bases(mesh.layers)
    for (a, b), (family, layer) in mesh.boundary_edges.items():
        xa, ya = mesh.nodes[a]
        xb, yb = mesh.nodes[b]
        y_bot = bases[layer]
        y_top = bases[layer] + mesh.layers[layer].thickness
        if family == EDGE_SIDE:
            on_side = (abs(xa) <= tol and abs(xb) <= tol) or (
                abs(xa - width) <= tol and abs(xb - width) <= tol
            )
            if not on_side:
                violations.append(f"side tag off the vertical sides: edge ({a}, {b})")
        elif family == EDGE_TOP:
            if not (abs(ya - y_top) <= tol and abs(yb - y_top) <= tol):
                violations.append(f"top tag off the layer top: edge ({a}, {b})")
        elif family == EDGE_BOTTOM:
            if not (abs(ya - y_bot) <= tol and abs(yb - y_bot) <= tol):
                violations.append(f"bottom tag off the layer bottom: edge ({a}, {b})")
        else:
            violations.append(f"unknown boundary family {family} on edge ({a}, {b})")

    # Every layer needs clamped sides of positive measure.
    for i in range(mesh.n_layers):
        has_side = any(
            family == EDGE_SIDE and layer == i
            for family, layer in mesh.boundary_edges.values()
        )
        if not has_side:
            violations.append(f"meas(Gamma1) = 0 for layer {i}: no clamped side edges")

    # Matched interfaces: bijection between bottom-edge nodes of the upper
    # layer and top-edge nodes of the lower layer, coinciding coordinates.
    if len(mesh.interface_pairs) != mesh.n_layers - 1:
        violations.append(
            f"interface count mismatch: {len(mesh.interface_pairs)} pair lists "
            f"for {mesh.n_layers} layers"
        )
    for k, pairs in enumerate(mesh.interface_pairs):
        uppers = pairs[:, 0]
        lowers = pairs[:, 1]
        if len(set(uppers.tolist())) != len(uppers) or len(set(lowers.tolist())) != len(lowers):
            violations.append(f"interface pairing not injective: interface {k}")
        bottom_nodes = _edge_nodes(mesh, EDGE_BOTTOM, k)
        top_nodes = _edge_nodes(mesh, EDGE_TOP, k + 1)
        if bottom_nodes != set(uppers.tolist()):
            violations.append(
                f"interface pairing misses bottom-edge nodes: interface {k} "
                f"(layer {k} bottom)"
            )
        if top_nodes != set(lowers.tolist()):
            violations.append(
                f"interface pairing misses top-edge nodes: interface {k} "
                f"(layer {k + 1} top)"
            )
        diffs = np.abs(mesh.nodes[uppers] - mesh.nodes[lowers]).max(axis=1)
        for p in np.nonzero(diffs > tol)[0]:
            violations.append(
                f"interface pair coordinates differ: interface {k} pair {p} "
                f"nodes ({uppers[p]}, {lowers[p]}) offset {diffs[p]:.3e}"
            )

    return violations


def _edge_nodes(mesh: Mesh, family: int, layer: int) -> set[int]:
    nodes: set[int] = set()
    for (a, b), (fam, lay) in mesh.boundary_edges.items():
        if fam == family and lay == layer:
            nodes.add(a)
            nodes.add(b)
    return nodes


def dirichlet_nodes(mesh: Mesh) -> np.ndarray:
    """Nodes clamped by the side boundary condition, sorted."""
    clamped: set[int] = set()
    for i in range(mesh.n_layers):
        clamped |= _edge_nodes(mesh, EDGE_SIDE, i)
    return np.array(sorted(clamped), dtype=np.int64)


def write_mesh_text(mesh: Mesh, path: str) -> None:
    """Write the mesh as whitespace-delimited text.

    Sections in order: layers (width thickness ny), nodes (x y), triangles
    (three node ids and the layer), boundary tags (node pair, family,
    layer), interface pairs (interface, upper node, lower node). Floats are
    written with enough digits to round-trip bit-exactly.
    """
    lines = [
        "# layered triangular mesh",
        "# sections: layers, nodes, triangles, tags, pairs",
        f"layers {mesh.n_layers} nx {mesh.nx}",
        "# width thickness ny",
    ]
    for s in mesh.layers:
        lines.append(f"{s.width:.17g} {s.thickness:.17g} {s.ny}")
    lines.append(f"nodes {mesh.n_nodes}")
    lines.append("# x y")
    for x, y in mesh.nodes:
        lines.append(f"{x:.17g} {y:.17g}")
    lines.append(f"triangles {mesh.n_triangles}")
    lines.append("# a b c layer")
    for tri, lay in zip(mesh.triangles, mesh.tri_layer):
        lines.append(f"{tri[0]} {tri[1]} {tri[2]} {lay}")
    lines.append(f"tags {len(mesh.boundary_edges)}")
    lines.append("# a b family layer")
    for (a, b), (family, layer) in sorted(mesh.boundary_edges.items()):
        lines.append(f"{a} {b} {family} {layer}")
    n_pairs = sum(len(p) for p in mesh.interface_pairs)
    lines.append(f"pairs {n_pairs}")
    lines.append("# interface upper lower")
    for k, pairs in enumerate(mesh.interface_pairs):
        for up, lo in pairs:
            lines.append(f"{k} {up} {lo}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh_text(path: str) -> Mesh:
    """Read a mesh written by ``write_mesh_text``."""
    with open(path) as fh:
        rows = [ln.split() for ln in fh if ln.strip() and not ln.startswith("#")]
    pos = 0

    def expect(keyword: str) -> list[str]:
        nonlocal pos
        row = rows[pos]
        if row[0] != keyword:
            raise ValueError(f"mesh file: expected section '{keyword}', got '{row[0]}'")
        pos += 1
        return row

    head = expect("layers")
    n_layers, nx = int(head[1]), int(head[3])
    layers = []
    for _ in range(n_layers):
        w, t, ny = rows[pos]
        layers.append(LayerSpec(width=float(w), thickness=float(t), ny=int(ny)))
        pos += 1
    n_nodes = int(expect("nodes")[1])
    nodes = np.array([[float(v) for v in rows[pos + i]] for i in range(n_nodes)])
    pos += n_nodes
    n_tris = int(expect("triangles")[1])
    tri_rows = np.array(
        [[int(v) for v in rows[pos + i]] for i in range(n_tris)], dtype=np.int64
    )
    pos += n_tris
    n_tags = int(expect("tags")[1])
    boundary_edges = {}
    for i in range(n_tags):
        a, b, family, layer = (int(v) for v in rows[pos + i])
        boundary_edges[(a, b)] = (family, layer)
    pos += n_tags
    n_pairs = int(expect("pairs")[1])
    per_iface: dict[int, list[tuple[int, int]]] = {}
    for i in range(n_pairs):
        k, up, lo = (int(v) for v in rows[pos + i])
        per_iface.setdefault(k, []).append((up, lo))
    interface_pairs = [
        np.array(per_iface.get(k, []), dtype=np.int64).reshape(-1, 2)
        for k in range(n_layers - 1)
    ]

    offsets = []
    total = 0
    for s in layers:
        offsets.append(total)
        total += (nx + 1) * (s.ny + 1)
    return Mesh(
        layers=tuple(layers),
        nx=nx,
        nodes=nodes,
        triangles=tri_rows[:, :3],
        tri_layer=tri_rows[:, 3],
        boundary_edges=boundary_edges,
        interface_pairs=interface_pairs,
        h=_formula_h(tuple(layers), nx),
        node_offsets=tuple(offsets),
    )
