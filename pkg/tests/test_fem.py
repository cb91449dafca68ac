import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convexfem.fem import (DiscreteField, UnsupportedError, assemble_linear_form, assemble_weak_block, cell_operator,
                           div, eval_expr_rows, function_space, grad, hessian, interpolate, jump, normal_grad_jump,
                           quadrature_rule, value, vector_space)
from convexfem.mesh import make_mesh, unit_square_mesh
from convexfem.problem import BlockProblem


def _block(space):
    return BlockProblem().add_var(space)


def _monomial(p, q):
    """Mean of x^p y^q over the reference triangle (integral divided by its area 1/2)."""
    return 2 * math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)


@pytest.mark.parametrize("family, degree, n", [("CG", 1, 4), ("DG", 1, 6), ("RT", 1, 5), ("CR", 1, 5),
                                               ("DG", 0, 2), ("CG", 2, 9), ("Real", 0, 1)])
def test_dof_counts_single_square(family, degree, n):
    m = unit_square_mesh(1, "right")
    assert function_space(m, family, degree).num_dofs == n


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 6), diag=st.sampled_from(["left", "right", "crossed"]), v=st.integers(1, 3))
def test_dof_count_formulas(n, diag, v):
    m = unit_square_mesh(n, diag)
    V, F, E = m.num_vertices, m.num_facets, m.num_cells
    expect = {("CG", 1): V, ("CG", 2): V + F, ("DG", 0): E, ("DG", 1): 3 * E, ("CR", 1): F}
    for (fam, deg), count in expect.items():
        assert function_space(m, fam, deg, v).num_dofs == count * v
    assert function_space(m, "RT", 1).num_dofs == F
    assert function_space(m, "Real", 0).num_dofs == 1


def test_unsupported_element():
    m = unit_square_mesh(1)
    with pytest.raises(ValueError):
        function_space(m, "CG", 3)
    with pytest.raises(ValueError):
        function_space(m, "RT", 2)


def test_vertex_and_centroid_rules():
    r = quadrature_rule("vertex", "cell")
    np.testing.assert_array_equal(r.points, np.eye(3))
    np.testing.assert_allclose(r.weights, [1 / 3] * 3)
    f = quadrature_rule("vertex", "facet")
    np.testing.assert_allclose(f.weights, [0.5, 0.5])
    c = quadrature_rule("centroid", "cell")
    assert c.num_points == 1 and c.weights[0] == 1.0


@pytest.mark.parametrize("scheme, degree", [("centroid", None), ("vertex", None)] +
                         [("gauss", d) for d in range(5)])
def test_rule_weights(scheme, degree):
    for dom in ("cell", "facet"):
        r = quadrature_rule(scheme, dom, degree)
        assert r.weights.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(r.weights > 0)


def test_unsupported_gauss_degree():
    with pytest.raises(ValueError):
        quadrature_rule("gauss", "cell", 5)


@pytest.mark.parametrize("degree", range(5))
def test_gauss_cell_exactness(degree):
    r = quadrature_rule("gauss", "cell", degree)
    x, y = r.points[:, 1], r.points[:, 2]
    for p in range(degree + 1):
        for q in range(degree + 1 - p):
            assert r.weights @ (x ** p * y ** q) == pytest.approx(_monomial(p, q), abs=1e-14)


@pytest.mark.parametrize("degree", range(5))
def test_gauss_facet_exactness(degree):
    r = quadrature_rule("gauss", "facet", degree)
    for p in range(degree + 1):
        assert r.weights @ r.points ** p == pytest.approx(1 / (p + 1), abs=1e-14)


def test_centroid_integrates_affine():
    m = unit_square_mesh(3, "crossed")
    u = _block(function_space(m, "CG", 1))
    vec, off = assemble_linear_form(2.0 * value(u) + 0.5)
    f = interpolate(u.space, lambda x: 1 + 3 * x[:, 0] - x[:, 1])
    assert vec[u] @ f.values + off == pytest.approx(2 * (1 + 1.5 - 0.5) + 0.5)


def test_cg1_gradient_rows_on_reference_cell():
    m = make_mesh(np.array([[0, 0], [1, 0], [0, 1.0]]), [[0, 1, 2]])
    u = _block(function_space(m, "CG", 1))
    rows, const = eval_expr_rows(grad(u), "cells", 0, 0)
    np.testing.assert_allclose(rows[u].toarray(), [[-1, 1, 0], [-1, 0, 1]])
    np.testing.assert_array_equal(const, 0)


def test_dg0_jump_rows():
    m = unit_square_mesh(1, "right")
    u = _block(function_space(m, "DG", 0))
    (f,) = m.interior_facets
    rows, _ = eval_expr_rows(jump(u), "interior_facets", f, 0)
    c0, c1 = m.facet_cells[f]
    r = rows[u].toarray()[0]
    assert r[c0] == 1.0 and r[c1] == -1.0


def test_facet_operator_on_cells_rejected():
    m = unit_square_mesh(1)
    u = _block(function_space(m, "DG", 0))
    with pytest.raises(ValueError):
        eval_expr_rows(jump(u), "cells", 0, 0, quadrature_rule("centroid", "cell"))


def test_rt_divergence_constant_per_cell():
    m = unit_square_mesh(2, "crossed")
    s = _block(function_space(m, "RT", 1))
    rule = quadrature_rule("gauss", "cell", 2)
    tab = cell_operator(s.space, "div", np.arange(m.num_cells), rule.points)
    np.testing.assert_allclose(tab, np.broadcast_to(tab[:, :1], tab.shape), atol=1e-12)


def test_dg0_div_rt_block_is_signed_facet_lengths():
    m = unit_square_mesh(1, "right")
    s = _block(function_space(m, "RT", 1))
    mats, rhs = assemble_weak_block(function_space(m, "DG", 0), div(s))
    A = mats[s].toarray()
    assert A.shape == (2, 5)
    for c in range(2):
        facets = m.cell_facets[c]
        np.testing.assert_allclose(np.abs(A[c, facets]), m.facet_lengths[facets])
        assert np.count_nonzero(A[c]) == 3
    # the diagonal is shared, with opposite orientation seen from the two cells
    (f,) = m.interior_facets
    assert A[0, f] == -A[1, f]
    np.testing.assert_array_equal(rhs, 0)


def test_cg1_mass_row_sums():
    m = unit_square_mesh(1, "right")
    V = function_space(m, "CG", 1)
    u = _block(V)
    mats, _ = assemble_weak_block(V, value(u), quad=quadrature_rule("gauss", "cell", 2))
    M = mats[u].toarray()
    patch = np.zeros(4)
    for c in range(m.num_cells):
        patch[m.cells[c]] += m.cell_areas[c]
    np.testing.assert_allclose(M.sum(axis=1), patch / 3, atol=1e-14)
    # the analytic P1 mass matrix: area/12 * (1 + delta_ij) per cell
    ref = np.zeros((4, 4))
    for c in range(m.num_cells):
        ref[np.ix_(m.cells[c], m.cells[c])] += m.cell_areas[c] / 12 * (np.ones((3, 3)) + np.eye(3))
    np.testing.assert_allclose(M, ref, atol=1e-14)


def test_pressure_divergence_kills_constants():
    m = unit_square_mesh(3, "crossed")
    u = _block(vector_space(m, "CG", 2))
    mats, _ = assemble_weak_block(function_space(m, "CG", 1), div(u), quad=quadrature_rule("gauss", "cell", 2))
    const = interpolate(u.space, lambda x: np.column_stack([np.full(len(x), 2.0), np.full(len(x), -1.0)]))
    np.testing.assert_allclose(mats[u] @ const.values, 0, atol=1e-13)


def test_interpolate_examples():
    m = unit_square_mesh(3, "right")
    V = function_space(m, "CG", 1)
    np.testing.assert_array_equal(interpolate(V, 1.0).values, 1.0)
    lin = interpolate(V, lambda x: x[:, 0] + x[:, 1])
    c = m.cell_centroids[4]
    assert lin(c)[0] == pytest.approx(c.sum())
    with pytest.raises(UnsupportedError):
        interpolate(function_space(m, "RT", 1), 1.0)


def test_obstacle_function_at_origin():
    def g(x):
        X, Y = x[:, 0], x[:, 1]
        return -0.1 + 0.01 * np.sin(4 * np.pi * X) * np.cos(4 * np.pi * Y) * np.sin(16 * np.pi * X) * np.cos(16 * np.pi * Y)
    V = function_space(unit_square_mesh(2), "CG", 1)
    assert interpolate(V, g).values[0] == pytest.approx(-0.1)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), family=st.sampled_from([("CG", 1), ("CG", 2), ("DG", 1), ("CR", 1)]))
def test_gradient_rows_match_finite_differences(seed, family):
    rng = np.random.default_rng(seed)
    m = unit_square_mesh(2, "crossed")
    V = function_space(m, *family)
    u = _block(V)
    f = DiscreteField(V, rng.normal(size=V.num_dofs))
    cell = int(rng.integers(m.num_cells))
    lam = rng.dirichlet(np.ones(3)) * 0.8 + 0.2 / 3
    rule = quadrature_rule("centroid", "cell")
    object.__setattr__(rule, "points", lam[None, :])
    rows, _ = eval_expr_rows(grad(u), "cells", cell, 0, rule)
    g = rows[u] @ f.values
    x = lam @ m.vertex_coords[m.cells[cell]]
    jinv = np.linalg.inv(m.cell_jacobians[cell])
    h = 1e-6
    fd = []
    for e in np.eye(2):
        vals = []
        for s in (1, -1):
            p = x + s * h * e
            ref = jinv @ (p - m.vertex_coords[m.cells[cell, 0]])
            b = np.array([1 - ref.sum(), *ref])
            vals.append(f.eval_cells("value", [cell], b[None])[0, 0, 0])
        fd.append((vals[0] - vals[1]) / (2 * h))
    np.testing.assert_allclose(g, fd, atol=1e-6 * (1 + np.abs(g).max()))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), degree=st.sampled_from([1, 2]))
def test_jump_of_continuous_fields_vanishes(seed, degree):
    m = unit_square_mesh(3, "crossed")
    V = function_space(m, "CG", degree)
    u = _block(V)
    rule = quadrature_rule("gauss", "facet", 2)
    f = np.random.default_rng(seed).normal(size=V.num_dofs)
    for p in range(rule.num_points):
        for e in m.interior_facets[::5]:
            rows, _ = eval_expr_rows(jump(u), "interior_facets", e, p, rule)
            assert abs(rows[u] @ f)[0] < 1e-12
            assert np.abs(rows[u].data).max() <= 1.0 + 1e-12


def test_rt_normal_flux_continuity():
    m = unit_square_mesh(4, "crossed")
    V = function_space(m, "RT", 1)
    f = DiscreteField(V, np.random.default_rng(3).normal(size=V.num_dofs))
    from convexfem.fem.expr import facet_bary
    t = np.array([0.2, 0.5, 0.9])
    fs = m.interior_facets
    c0, b0 = facet_bary(m, fs, 0, t)
    c1, b1 = facet_bary(m, fs, 1, t)
    v0 = np.stack([f.eval_cells("value", [c], b[None] if b.ndim == 1 else b)[0] for c, b in zip(c0, b0)])
    v1 = np.stack([f.eval_cells("value", [c], b)[0] for c, b in zip(c1, b1)])
    n = m.facet_normals[fs]
    np.testing.assert_allclose(np.einsum("fpk,fk->fp", v0, n), np.einsum("fpk,fk->fp", v1, n), atol=1e-12)


def test_cg2_hessian_exact_and_cg1_zero():
    m = unit_square_mesh(2, "right")
    V2 = function_space(m, "CG", 2)
    f = interpolate(V2, lambda x: 3 * x[:, 0] ** 2 - 2 * x[:, 0] * x[:, 1] + 0.5 * x[:, 1] ** 2)
    u = _block(V2)
    rows, _ = eval_expr_rows(hessian(u), "cells", 3, 0)
    # (u_xx, u_yy, 2 u_xy)
    np.testing.assert_allclose(rows[u] @ f.values, [6.0, 1.0, -4.0], atol=1e-10)
    w = _block(function_space(m, "CG", 1))
    rows1, _ = eval_expr_rows(hessian(w), "cells", 0, 0)
    assert rows1[w].nnz == 0 or np.all(rows1[w].data == 0)


def test_normal_grad_jump_of_smooth_field_vanishes():
    m = unit_square_mesh(3, "crossed")
    V = function_space(m, "CG", 2)
    u = _block(V)
    f = interpolate(V, lambda x: x[:, 0] ** 2 + x[:, 0] * x[:, 1])
    for e in m.interior_facets:
        rows, _ = eval_expr_rows(normal_grad_jump(u), "interior_facets", e, 0)
        assert abs(rows[u] @ f.values)[0] < 1e-12
