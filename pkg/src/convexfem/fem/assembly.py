"""Assembly of weak constraint blocks and linear forms."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .expr import AffineFieldExpr, _apply_cell_op, eval_points, facet_bary, measure_entities
from .quadrature import QuadRule, quadrature_rule


def _mult_values(mult_space, kind, ents, rule):
    mesh = mult_space.mesh
    if kind == "cell":
        tab = mult_space.tabulate("value", ents, rule.points)
        return tab, mult_space.dof_map[ents]
    cells, bary = facet_bary(mesh, ents, 0, rule.points)
    return mult_space.tabulate("value", cells, bary), mult_space.dof_map[cells]


def default_rule(measure, scheme="centroid", degree=None):
    domain = "cell" if measure == "cells" else "facet"
    if domain == "facet" and scheme == "centroid" and degree is None:
        scheme = "vertex"
    return quadrature_rule(scheme, domain, degree)


def assemble_weak_block(mult_space, expr: AffineFieldExpr, measure="cells", quad: QuadRule | None = None):
    """Assemble ``int psi . expr`` for every basis function psi of ``mult_space``.

    Returns ``(matrices, rhs)`` where ``matrices`` maps each variable block of
    ``expr`` to a CSR matrix (M x N_block) and ``rhs`` is the contribution of
    the constant (and data) part, so that the weak form equals
    ``sum_b matrices[b] @ x_b + rhs``.
    """
    if expr.dim != mult_space.value_dim:
        raise ValueError(f"expression dim {expr.dim} != multiplier value_dim {mult_space.value_dim}")
    mesh = mult_space.mesh
    quad = quad or default_rule(measure)
    kind, ents = measure_entities(mesh, measure)
    pr = eval_points(expr, measure, quad, mesh=mesh)
    psi, rows = _mult_values(mult_space, kind, ents, quad)  # (E, P, k, m)
    wpsi = psi * pr.weights[:, :, None, None]
    M = mult_space.num_dofs
    mats = {}
    for blk, (data, cols) in pr.blocks.items():
        loc = np.einsum("epkm,epkn->emn", wpsi, data)
        r = np.broadcast_to(rows[:, :, None], loc.shape).ravel()
        c = np.broadcast_to(cols[:, None, :], loc.shape).ravel()
        mat = sp.coo_matrix((loc.ravel(), (r, c)), shape=(M, blk.space.num_dofs)).tocsr()
        mat.sum_duplicates()
        mats[blk] = mat
    rhs = np.zeros(M)
    np.add.at(rhs, rows.ravel(), np.einsum("epkm,epk->em", wpsi, pr.const).ravel())
    return mats, rhs


def assemble_linear_form(expr: AffineFieldExpr, measure="cells", quad: QuadRule | None = None):
    """Vectors ``c_b`` with ``int expr = sum_b c_b . x_b + offset`` for a scalar expression."""
    if expr.dim != 1:
        raise ValueError("linear forms need a scalar integrand")
    quad = quad or default_rule(measure)
    pr = eval_points(expr, measure, quad)
    out = {}
    for blk, (data, cols) in pr.blocks.items():
        vec = np.zeros(blk.space.num_dofs)
        np.add.at(vec, cols.ravel(), np.einsum("ep,epn->en", pr.weights, data[:, :, 0]).ravel())
        out[blk] = vec
    return out, float(np.sum(pr.weights * pr.const[:, :, 0]))


def eval_expr_rows(expr: AffineFieldExpr, measure, entity: int, point, quad: QuadRule | None = None):
    """Rows of ``expr`` at a single location.

    ``point`` is a quadrature point index of ``quad``. Returns
    ``({block: csr (k x N_block)}, const (k,))``.
    """
    quad = quad or default_rule(measure)
    pr = eval_points(expr, measure, quad, entities=[entity])
    out = {}
    for blk, (data, cols) in pr.blocks.items():
        d = data[0, point]  # (k, nloc)
        r = np.repeat(np.arange(expr.dim), d.shape[1])
        c = np.tile(cols[0], expr.dim)
        out[blk] = sp.csr_matrix((d.ravel(), (r, c)), shape=(expr.dim, blk.space.num_dofs))
    return out, pr.const[0, point].copy()


def cell_operator(space, op, cells, bary, arg=None):
    """Tabulated operator of a space (exposed for tests and post-processing)."""
    return _apply_cell_op(space, op, np.asarray(cells), np.asarray(bary, dtype=float), arg)
