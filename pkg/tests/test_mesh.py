import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convexfem.mesh import (InvalidMeshError, MeshParseError, build_facets, make_mesh, read_mesh,
                            rectangle_mesh, unit_square_mesh, write_mesh)


@pytest.mark.parametrize("diag, cells, verts, facets", [("right", 2, 4, 5), ("left", 2, 4, 5), ("crossed", 4, 5, 8)])
def test_single_square_counts(diag, cells, verts, facets):
    m = unit_square_mesh(1, diag)
    assert (m.num_cells, m.num_vertices, m.num_facets) == (cells, verts, facets)


def test_crossed_25():
    m = unit_square_mesh(25, "crossed")
    assert m.num_cells == 2500
    assert m.num_vertices == 26 ** 2 + 25 ** 2
    assert m.area == pytest.approx(1.0, rel=1e-12)


def test_zero_subdivisions_rejected():
    with pytest.raises(ValueError):
        unit_square_mesh(0)


def test_bad_diagonal_rejected():
    with pytest.raises(ValueError):
        unit_square_mesh(2, "diagonal")


def test_boundary_facet_counts():
    m = unit_square_mesh(1, "right")
    assert len(m.boundary_facets) == 4 and len(m.interior_facets) == 1
    assert len(unit_square_mesh(2, "left").boundary_facets) == 8


def test_duplicated_cell_is_invalid():
    coords = np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]])
    with pytest.raises(InvalidMeshError):
        make_mesh(coords, [[0, 1, 2], [0, 2, 3], [0, 1, 2]])


def test_collapsed_cell_is_invalid():
    coords = np.array([[0, 0], [1, 0], [1, 1.0]])
    with pytest.raises(InvalidMeshError):
        make_mesh(coords, [[0, 1, 1]])


def test_cell_geometry():
    m = unit_square_mesh(1, "right")
    for c in range(m.num_cells):
        area, (origin, jac), git = m.cell_geometry(c)
        assert area == pytest.approx(0.5)
        np.testing.assert_allclose(git, np.linalg.inv(jac).T)
    for c in range(4):
        assert unit_square_mesh(1, "crossed").cell_geometry(c)[0] == pytest.approx(0.25)


def test_facet_geometry():
    m = unit_square_mesh(4, "right")
    for f in m.boundary_facets:
        assert m.facet_geometry(f)[0] == pytest.approx(0.25)
    bottom = m.region_facets("bottom")
    for f in bottom:
        np.testing.assert_allclose(m.facet_geometry(f)[1], [0.0, -1.0], atol=1e-15)
    m1 = unit_square_mesh(1, "right")
    (diag,) = m1.interior_facets
    assert m1.facet_geometry(diag)[0] == pytest.approx(np.sqrt(2))


def test_boundary_region_ids():
    m = unit_square_mesh(3, "crossed")
    mid = m.facet_midpoints
    for name, rid, (axis, val) in [("bottom", 1, (1, 0)), ("right", 2, (0, 1)), ("top", 3, (1, 1)), ("left", 4, (0, 0))]:
        f = m.region_facets(name)
        assert len(f) == 3
        np.testing.assert_allclose(mid[f, axis], val)
        np.testing.assert_array_equal(f, m.region_facets(rid))


def test_normal_points_out_of_first_cell():
    m = unit_square_mesh(3, "crossed")
    out = m.facet_midpoints - m.cell_centroids[m.facet_cells[:, 0]]
    assert np.all(np.einsum("ij,ij->i", out, m.facet_normals) > 0)
    np.testing.assert_allclose(np.linalg.norm(m.facet_normals, axis=1), 1.0)


def test_read_square_file():
    text = "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n"
    m = read_mesh(io.StringIO(text))
    ref = unit_square_mesh(1, "right")
    assert sorted(map(tuple, m.vertex_coords)) == sorted(map(tuple, ref.vertex_coords))
    assert m.num_cells == 2 and m.num_facets == 5 and m.area == pytest.approx(1.0)


def test_read_out_of_range_index():
    with pytest.raises(MeshParseError) as err:
        read_mesh(io.StringIO("3 1\n0 0\n1 0\n0 1\n0 1 5\n"))
    assert err.value.line == 5


def test_read_garbage():
    with pytest.raises(MeshParseError):
        read_mesh(io.StringIO("3 1\n0 0\n1 zero\n0 1\n0 1 2\n"))


@pytest.mark.parametrize("diag", ["left", "right", "crossed"])
def test_write_read_roundtrip(diag):
    m = rectangle_mesh(3, 2, 1.5, 0.7, diag)
    buf = io.StringIO()
    write_mesh(m, buf)
    back = read_mesh(io.StringIO(buf.getvalue()))
    np.testing.assert_array_equal(back.vertex_coords, m.vertex_coords)
    np.testing.assert_array_equal(back.cells, m.cells)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 12), diag=st.sampled_from(["left", "right", "crossed"]))
def test_mesh_invariants(n, diag):
    m = unit_square_mesh(n, diag)
    assert abs(m.area - 1.0) <= 1e-12
    assert np.all(m.cell_areas > 0)
    # Euler relation for a simply connected domain
    assert m.num_vertices - m.num_facets + m.num_cells == 1
    nadj = (m.facet_cells >= 0).sum(axis=1)
    assert np.all(nadj[m.interior_facets] == 2) and np.all(nadj[m.boundary_facets] == 1)
    assert len(m.boundary_facets) == 4 * n


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 8), diag=st.sampled_from(["left", "right", "crossed"]))
def test_interior_normals_are_negated(n, diag):
    m = unit_square_mesh(n, diag)
    for f in m.interior_facets:
        c0, c1 = m.facet_cells[f]
        outward = []
        for c in (c0, c1):
            to_mid = m.facet_midpoints[f] - m.cell_centroids[c]
            outward.append(np.sign(to_mid @ m.facet_normals[f]) * m.facet_normals[f])
        np.testing.assert_array_equal(outward[0], -outward[1])


def test_build_facets_deterministic():
    m = unit_square_mesh(4, "crossed")
    a = build_facets(m.vertex_coords, m.cells)
    b = build_facets(m.vertex_coords.copy(), m.cells.copy())
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
