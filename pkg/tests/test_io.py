import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convexfem.demos import build_obstacle
from convexfem.fem import DiscreteField, function_space, interpolate
from convexfem.io import (ImageParseError, ProgramFormatError, RasterImage, UnsupportedImageError, export_program,
                          import_program, programs_equal, read_image, write_image, write_vtk)
from convexfem.ipm import solve
from convexfem.mesh import unit_square_mesh
from convexfem.program import CONE_KINDS, ProgramBuilder


# ---------------------------------------------------------------------------- images
def test_p5_roundtrip():
    img = RasterImage.from_array(np.array([[0, 255], [17, 128]], dtype=np.uint8))
    data = write_image(img)
    assert data.startswith(b"P5")
    back = read_image(data)
    assert (back.width, back.height, back.channels) == (2, 2, 1)
    np.testing.assert_array_equal(back.data, img.data)


@settings(max_examples=30, deadline=None)
@given(w=st.integers(1, 6), h=st.integers(1, 6), c=st.sampled_from([1, 3]), seed=st.integers(0, 2 ** 16))
def test_image_roundtrip_is_lossless(w, h, c, seed):
    arr = np.random.default_rng(seed).integers(0, 256, size=(h, w, c), dtype=np.uint8)
    img = RasterImage.from_array(arr)
    np.testing.assert_array_equal(read_image(io.BytesIO(write_image(img))).data, arr)


def test_header_comments_are_skipped():
    data = b"P5\n# a comment\n2 1\n# another\n255\n\x01\x02"
    np.testing.assert_array_equal(read_image(data).data.ravel(), [1, 2])


def test_p6_with_16_bit_samples_is_unsupported():
    with pytest.raises(UnsupportedImageError):
        read_image(b"P6\n1 1\n65535\n" + bytes(6))


def test_truncated_payload():
    with pytest.raises(ImageParseError):
        read_image(b"P5\n2 2\n255\n\x00\x01\x02")


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0 0 0", b"P5\n2\n", b"P5\nx 2\n255\n\x00\x00", b""])
def test_malformed_header(data):
    with pytest.raises(ImageParseError):
        read_image(data)


# ---------------------------------------------------------------------------- VTK
@pytest.fixture(scope="module")
def mesh():
    return unit_square_mesh(2, "right")


def test_cg1_constant_is_point_data(mesh):
    V = function_space(mesh, "CG", 1)
    text = write_vtk(io.StringIO(), mesh, {"c": DiscreteField(V, np.full(V.num_dofs, 2.5))})
    head, data = text.split(f"POINT_DATA {mesh.num_vertices}\n")
    assert "CELL_DATA" not in text
    lines = data.splitlines()
    assert lines[0] == "SCALARS c double 1"
    assert lines[2:] == ["2.5"] * mesh.num_vertices


def test_dg0_is_cell_data(mesh):
    V = function_space(mesh, "DG", 0)
    text = write_vtk(io.StringIO(), mesh, {"d": DiscreteField(V, np.arange(V.num_dofs, dtype=float))})
    assert f"CELL_DATA {mesh.num_cells}" in text and "POINT_DATA" not in text
    vals = text.split("LOOKUP_TABLE default\n")[1].split()
    assert [float(v) for v in vals] == list(range(mesh.num_cells))


def test_higher_order_fields_are_sampled_per_cell(mesh):
    V = function_space(mesh, "CG", 2)
    f = interpolate(V, lambda x: x[:, 0] ** 2)
    text = write_vtk(io.StringIO(), mesh, [("q", f)])
    vals = np.array(text.split("LOOKUP_TABLE default\n")[1].split(), dtype=float)
    np.testing.assert_allclose(vals, mesh.cell_centroids[:, 0] ** 2, atol=1e-12)


def test_duplicate_field_names(mesh):
    V = function_space(mesh, "CG", 1)
    f = DiscreteField(V, np.zeros(V.num_dofs))
    with pytest.raises(ValueError):
        write_vtk(io.StringIO(), mesh, [("u", f), ("u", f)])


def test_vtk_output_is_deterministic(mesh, tmp_path):
    V = function_space(mesh, "CG", 1)
    f = interpolate(V, lambda x: np.sin(x[:, 0]) + x[:, 1] / 3)
    write_vtk(tmp_path / "a.vtk", mesh, {"f": f, "cells": np.arange(mesh.num_cells)})
    write_vtk(tmp_path / "b.vtk", mesh, {"f": f, "cells": np.arange(mesh.num_cells)})
    assert (tmp_path / "a.vtk").read_bytes() == (tmp_path / "b.vtk").read_bytes()
    text = (tmp_path / "a.vtk").read_text()
    assert text.startswith("# vtk DataFile Version 3.0\n")
    assert f"CELLS {mesh.num_cells} {4 * mesh.num_cells}" in text


def test_vtk_rejects_unmatched_array(mesh):
    with pytest.raises(ValueError):
        write_vtk(io.StringIO(), mesh, {"x": np.zeros(mesh.num_vertices + 1)})


# ---------------------------------------------------------------------------- programs
def trivial_lp():
    B = ProgramBuilder()
    B.add_vars(2, lx=0.0, cost=[-1.0, -2.0])
    B.add_rows(1, [0, 0], [0, 1], [1.0, 1.0], -np.inf, 1.0)
    return B.build()


def test_trivial_lp_roundtrip():
    p = trivial_lp()
    text = export_program(p)
    for section in ("VARS 2", "BOUNDS", "CONES", "OBJ", "ROWS 1", "A 2"):
        assert section in text
    assert "0 0 inf" in text and "0 -inf 1" in text
    q = import_program(text)
    assert programs_equal(p, q)
    assert solve(q).objective == pytest.approx(solve(p).objective, abs=0)


def test_values_keep_seventeen_digits():
    B = ProgramBuilder()
    B.add_vars(1, cost=1 / 3)
    p = B.build()
    q = import_program(export_program(p))
    assert q.c[0] == p.c[0]


def test_obstacle_export_counts():
    mesh = unit_square_mesh(2, "right")
    prob, _, _ = build_obstacle(mesh)
    p = prob.assemble()
    text = export_program(p)
    q = import_program(text)
    assert programs_equal(p, q)
    cones = [ln.split() for ln in text.split("CONES ")[1].split("OBJ")[0].splitlines()[1:]]
    rquad = [c for c in cones if c[0] == "RQUAD"]
    assert mesh.num_cells == 8
    assert len(rquad) == 8
    assert sum(int(c[2]) for c in rquad) == 4 * 8
    assert {c[0] for c in cones} <= set(CONE_KINDS)


def test_malformed_program_text():
    text = export_program(trivial_lp())
    with pytest.raises(ProgramFormatError):
        import_program(text.replace("ROWS 1", "ROWZ 1"))
    with pytest.raises(ProgramFormatError):
        import_program(text.split("A 2")[0] + "A 5\n0 0 1\n")
    with pytest.raises(ProgramFormatError):
        import_program(text.replace("FREE", "PSD"))
