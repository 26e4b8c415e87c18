import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from layerfric.mesh import (
    EDGE_BOTTOM,
    EDGE_SIDE,
    EDGE_TOP,
    LayerSpec,
    audit_mesh,
    build_layered_mesh,
    dirichlet_nodes,
    read_mesh_text,
    refine_uniform,
    write_mesh_text,
)


def unit_square(nx=1, ny=1):
    return build_layered_mesh([LayerSpec(width=1.0, thickness=1.0, ny=ny)], nx)


def two_layer(nx=2, ny=1):
    spec = LayerSpec(width=1.0, thickness=0.5, ny=ny)
    return build_layered_mesh([spec, spec], nx)


class TestBuild:
    def test_smallest_grid_counts(self):
        mesh = unit_square()
        assert mesh.n_nodes == 4
        assert mesh.n_triangles == 2
        families = sorted(fam for fam, _ in mesh.boundary_edges.values())
        assert families == [EDGE_SIDE, EDGE_SIDE, EDGE_TOP, EDGE_BOTTOM]
        assert mesh.interface_pairs == []

    def test_two_layer_counts(self):
        mesh = two_layer()
        assert mesh.n_nodes == 12
        assert mesh.n_triangles == 8
        (pairs,) = mesh.interface_pairs
        assert pairs.shape == (3, 2)
        assert_array_equal(mesh.nodes[pairs[:, 0]], mesh.nodes[pairs[:, 1]])

    def test_pairs_are_distinct_dofs(self):
        (pairs,) = two_layer().interface_pairs
        assert not set(pairs[:, 0]) & set(pairs[:, 1])

    def test_three_layer_pairing_bijective(self):
        """Every bottom node of a non-last layer sits in exactly one pair."""
        specs = [LayerSpec(width=1.0, thickness=0.3, ny=2) for _ in range(3)]
        mesh = build_layered_mesh(specs, nx=4)
        for i in (0, 1):
            uppers = mesh.interface_pairs[i][:, 0].tolist()
            assert sorted(uppers) == sorted(mesh.bottom_row(i).tolist())
            assert len(set(uppers)) == len(uppers)
        assert audit_mesh(mesh) == []

    def test_triangles_counterclockwise(self):
        mesh = build_layered_mesh(
            [LayerSpec(1.0, 0.25, 1), LayerSpec(1.0, 0.75, 3)], nx=5
        )
        assert (mesh.tri_areas > 0).all()

    def test_stack_geometry(self):
        # last layer rests on y = 0, layer 0 on top
        mesh = two_layer()
        assert mesh.nodes[:, 1].min() == 0.0
        assert mesh.nodes[mesh.top_row(0), 1].max() == 1.0
        assert (mesh.nodes[mesh.bottom_row(0), 1] == 0.5).all()

    def test_h_is_cell_diagonal(self):
        mesh = build_layered_mesh(
            [LayerSpec(1.0, 0.5, 2), LayerSpec(1.0, 0.5, 1)], nx=4
        )
        assert mesh.h == math.hypot(0.25, 0.5)

    def test_width_mismatch_rejected(self):
        with pytest.raises(ValueError, match="share one width"):
            build_layered_mesh([LayerSpec(1.0, 0.5, 1), LayerSpec(2.0, 0.5, 1)], nx=2)

    def test_bad_dimensions_rejected(self):
        with pytest.raises(ValueError):
            LayerSpec(width=1.0, thickness=0.0, ny=1)
        with pytest.raises(ValueError):
            LayerSpec(width=-1.0, thickness=1.0, ny=1)
        with pytest.raises(ValueError):
            LayerSpec(width=1.0, thickness=1.0, ny=0)
        with pytest.raises(ValueError):
            build_layered_mesh([LayerSpec(1.0, 1.0, 1)], nx=0)
        with pytest.raises(ValueError):
            build_layered_mesh([], nx=1)

    def test_dirichlet_nodes_are_side_nodes(self):
        mesh = two_layer()
        nd = dirichlet_nodes(mesh)
        x = mesh.nodes[nd, 0]
        assert ((x == 0.0) | (x == 1.0)).all()
        # 2 layers x 2 sides x 2 nodes per side edge, no interior sharing
        assert len(nd) == 8


class TestRefine:
    def test_unit_square_refined_counts(self):
        fine = refine_uniform(unit_square())
        assert fine.n_triangles == 8
        assert fine.h == unit_square().h / 2

    def test_h_halves_exactly_over_levels(self):
        mesh = build_layered_mesh(
            [LayerSpec(1.0, 0.35, 1), LayerSpec(1.0, 0.65, 2)], nx=3
        )
        h0 = mesh.h
        for k in range(1, 4):
            mesh = refine_uniform(mesh)
            assert mesh.h == h0 * 2.0**-k

    def test_coarse_nodes_persist_bitwise(self):
        coarse = build_layered_mesh(
            [LayerSpec(1.0, 0.31, 2), LayerSpec(1.0, 0.47, 1), LayerSpec(1.0, 0.22, 3)],
            nx=3,
        )
        fine = refine_uniform(coarse)
        fine_set = {(x, y) for x, y in fine.nodes}
        for x, y in coarse.nodes:
            assert (x, y) in fine_set

    def test_refined_pair_count(self):
        """Refinement adds a midpoint pair between every old pair: 2n-1."""
        mesh = two_layer(nx=2)
        assert len(mesh.interface_pairs[0]) == 3
        fine = refine_uniform(mesh)
        assert len(fine.interface_pairs[0]) == 2 * 3 - 1
        assert len(refine_uniform(fine).interface_pairs[0]) == 2 * 5 - 1

    def test_refined_mesh_audits_clean(self):
        mesh = refine_uniform(refine_uniform(two_layer()))
        assert audit_mesh(mesh) == []


class TestAudit:
    def test_generator_output_is_clean(self):
        assert audit_mesh(unit_square()) == []
        assert audit_mesh(two_layer()) == []

    def test_displaced_interface_node_detected(self):
        mesh = two_layer()
        node = mesh.interface_pairs[0][1, 0]
        mesh.nodes[node, 1] += 1e-3
        violations = audit_mesh(mesh)
        assert any("interface pair coordinates differ" in v for v in violations)

    def test_missing_side_tags_detected(self):
        mesh = two_layer()
        mesh.boundary_edges = {
            edge: tag for edge, tag in mesh.boundary_edges.items() if tag[0] != EDGE_SIDE
        }
        violations = audit_mesh(mesh)
        assert any("meas(Gamma1) = 0" in v for v in violations)

    def test_mistagged_family_detected(self):
        mesh = unit_square()
        edge = next(e for e, t in mesh.boundary_edges.items() if t[0] == EDGE_TOP)
        mesh.boundary_edges[edge] = (EDGE_BOTTOM, 0)
        assert audit_mesh(mesh)


@settings(max_examples=25, deadline=None)
@given(
    nx=st.integers(1, 4),
    stack=st.lists(
        st.tuples(st.floats(0.05, 2.0), st.integers(1, 3)), min_size=1, max_size=3
    ),
    width=st.floats(0.5, 3.0),
)
def test_random_stacks_audit_clean(nx, stack, width):
    layers = [LayerSpec(width=width, thickness=t, ny=ny) for t, ny in stack]
    mesh = build_layered_mesh(layers, nx)
    assert audit_mesh(mesh) == []
    assert audit_mesh(refine_uniform(mesh)) == []


class TestTextFormat:
    def test_round_trip(self, tmp_path):
        mesh = build_layered_mesh(
            [LayerSpec(1.5, 0.31, 2), LayerSpec(1.5, 0.47, 1)], nx=3
        )
        path = tmp_path / "mesh.txt"
        write_mesh_text(mesh, str(path))
        back = read_mesh_text(str(path))
        assert_array_equal(back.nodes, mesh.nodes)
        assert_array_equal(back.triangles, mesh.triangles)
        assert_array_equal(back.tri_layer, mesh.tri_layer)
        assert back.boundary_edges == mesh.boundary_edges
        for a, b in zip(back.interface_pairs, mesh.interface_pairs):
            assert_array_equal(a, b)
        assert back.h == mesh.h
        assert audit_mesh(back) == []

    def test_header_documents_sections(self, tmp_path):
        path = tmp_path / "mesh.txt"
        write_mesh_text(unit_square(), str(path))
        head = path.read_text().splitlines()[:2]
        assert head[0].startswith("#")
        assert "sections" in head[1]
