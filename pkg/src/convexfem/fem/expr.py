"""Affine expressions of discrete fields and their evaluation as sparse rows."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CELL_OPS = ("value", "grad", "div", "sym_grad", "hessian", "partial")
FACET_OPS = ("jump", "normal_grad_jump", "trace", "avg")
SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class Term:
    coeff: np.ndarray  # (k, opdim)
    op: str
    target: object  # variable block handle or DiscreteField
    arg: int | None = None

    @property
    def is_data(self) -> bool:
        return hasattr(self.target, "values")


def op_dim(op: str, space, arg=None) -> int:
    v = space.value_dim
    if op in ("value", "jump", "trace", "avg", "partial"):
        return v
    if op == "grad":
        return 2 * v
    if op == "div":
        if v != 2:
            raise ValueError("div needs a 2-component field")
        return 1
    if op == "sym_grad":
        if v != 2:
            raise ValueError("sym_grad needs a 2-component field")
        return 3
    if op == "hessian":
        if v != 1:
            raise ValueError("hessian is defined for scalar fields")
        return 3
    if op == "normal_grad_jump":
        return v
    raise ValueError(f"unknown operator {op!r}")


@dataclass
class AffineFieldExpr:
    """``sum_t C_t op_t(field_t) + const``, with output dimension ``dim``."""

    dim: int
    terms: list = field(default_factory=list)
    const: np.ndarray = None

    __array_ufunc__ = None  # numpy defers to the reflected operators

    def __post_init__(self):
        if self.const is None:
            self.const = np.zeros(self.dim)
        self.const = np.asarray(self.const, dtype=float).reshape(self.dim)
        for t in self.terms:
            if t.coeff.shape[0] != self.dim:
                raise ValueError(f"term output dim {t.coeff.shape[0]} != {self.dim}")

    @property
    def domain(self) -> str:
        kinds = {"facet" if t.op in FACET_OPS else "cell" for t in self.terms}
        if len(kinds) > 1:
            raise ValueError("expression mixes cell and facet operators")
        return kinds.pop() if kinds else "any"

    def blocks(self):
        seen = []
        for t in self.terms:
            if not t.is_data and all(t.target is not b for b in seen):
                seen.append(t.target)
        return seen

    # algebra -------------------------------------------------------------------------
    def _combine(self, other, sign):
        other = as_expr(other, self.dim)
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch {self.dim} vs {other.dim}")
        terms = list(self.terms) + [Term(sign * t.coeff, t.op, t.target, t.arg) for t in other.terms]
        return AffineFieldExpr(self.dim, terms, self.const + sign * other.const)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        s = float(scalar)
        return AffineFieldExpr(self.dim, [Term(s * t.coeff, t.op, t.target, t.arg) for t in self.terms], s * self.const)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __rmatmul__(self, mat):
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        if mat.shape[1] != self.dim:
            raise ValueError(f"matrix with {mat.shape[1]} columns applied to dim {self.dim}")
        return AffineFieldExpr(mat.shape[0], [Term(mat @ t.coeff, t.op, t.target, t.arg) for t in self.terms],
                               mat @ self.const)

    def __getitem__(self, idx):
        sel = np.eye(self.dim)[np.atleast_1d(np.arange(self.dim)[idx])]
        return sel @ self

    def __repr__(self):
        ops = ", ".join(f"{t.op}({getattr(t.target, 'name', '?')})" for t in self.terms)
        return f"AffineFieldExpr(dim={self.dim}, [{ops}])"


def as_expr(x, dim=None) -> AffineFieldExpr:
    if isinstance(x, AffineFieldExpr):
        return x
    if hasattr(x, "space"):  # block handle or field: its value
        return value(x)
    c = np.atleast_1d(np.asarray(x, dtype=float))
    if dim is not None and c.size == 1:
        c = np.full(dim, float(c[0]))
    return AffineFieldExpr(len(c), [], c)


def _unary(op, u, arg=None):
    d = op_dim(op, u.space, arg)
    return AffineFieldExpr(d, [Term(np.eye(d), op, u, arg)])


def value(u):
    return _unary("value", u)


def component(u, i):
    return value(u)[i]


def grad(u):
    """Gradient, row-major per component: [du0/dx, du0/dy, du1/dx, ...]."""
    return _unary("grad", u)


def div(u):
    return _unary("div", u)


def sym_grad(u):
    """Strain as [E00, E11, sqrt(2) E01]."""
    return _unary("sym_grad", u)


def hessian(u):
    """Curvature as [H00, H11, 2 H01]."""
    return _unary("hessian", u)


def partial(u, i):
    return _unary("partial", u, int(i))


def jump(u):
    """``u+ - u-`` across interior facets (+ is the first adjacent cell)."""
    return _unary("jump", u)


def avg(u):
    return _unary("avg", u)


def normal_grad_jump(u):
    """``(grad u+ - grad u-) . n`` with n pointing out of the + cell."""
    return _unary("normal_grad_jump", u)


def trace(u):
    return _unary("trace", u)


def stack(exprs) -> AffineFieldExpr:
    exprs = [as_expr(e) for e in exprs]
    dim = sum(e.dim for e in exprs)
    out = AffineFieldExpr(dim)
    off = 0
    for e in exprs:
        emb = np.zeros((dim, e.dim))
        emb[off:off + e.dim] = np.eye(e.dim)
        out = out + emb @ e
        off += e.dim
    return out


# evaluation ----------------------------------------------------------------------
def _apply_cell_op(space, op, cells, bary, arg=None):
    """Operator tabulation (ncells, npts, opdim, nloc)."""
    if op == "value":
        return space.tabulate("value", cells, bary)
    if op in ("grad", "div", "sym_grad", "partial"):
        g = space.tabulate("grad", cells, bary)
        v = space.value_dim
        if op == "grad":
            return g
        if op == "partial":
            return g[:, :, arg::2]
        if op == "div":
            return (g[:, :, 0] + g[:, :, 3])[:, :, None]
        e01 = (g[:, :, 1] + g[:, :, 2]) / 2
        return np.stack([g[:, :, 0], g[:, :, 3], SQRT2 * e01], axis=2)
    if op == "hessian":
        h = space.tabulate("hessian", cells, bary)
        return np.stack([h[:, :, 0], h[:, :, 3], h[:, :, 1] + h[:, :, 2]], axis=2)
    raise ValueError(f"{op!r} is not a cell operator")


@dataclass
class PointRows:
    """Rows of an expression at all points of a set of entities.

    ``blocks`` maps block handle -> (data (nent, npts, k, nloc), cols (nent, nloc));
    ``const`` has shape (nent, npts, k) and ``weights`` (nent, npts) holds
    physical quadrature weights.
    """

    blocks: dict
    const: np.ndarray
    weights: np.ndarray
    entities: np.ndarray


def facet_bary(mesh, facets, side, t):
    """Barycentrics in adjacent cell ``side`` (0 or 1) of points ``t`` along ``facets``."""
    cells = mesh.facet_cells[facets, side]
    cv = mesh.cells[cells]  # (F, 3)
    fv = mesh.facets[facets]  # (F, 2)
    bary = np.zeros((len(facets), len(t), 3))
    ia = np.argmax(cv == fv[:, :1], axis=1)
    ib = np.argmax(cv == fv[:, 1:], axis=1)
    rows = np.arange(len(facets))
    bary[rows, :, ia] = 1 - t[None, :]
    bary[rows, :, ib] = t[None, :]
    return cells, bary


def measure_entities(mesh, measure):
    """Entity indices of ``measure``: "cells", "interior_facets", ("boundary", region) or "boundary"."""
    if measure == "cells":
        return "cell", np.arange(mesh.num_cells)
    if measure == "interior_facets":
        return "facet", mesh.interior_facets
    if measure == "boundary":
        return "facet", mesh.boundary_facets
    if isinstance(measure, tuple) and measure[0] == "boundary":
        return "facet", mesh.region_facets(measure[1])
    raise ValueError(f"unknown measure {measure!r}")


def _facet_op(space, op, facets, t, arg=None):
    mesh = space.mesh
    if op in ("trace", "value"):
        cells, bary = facet_bary(mesh, facets, 0, t)
        tab = space.tabulate("value", cells, bary)
        return tab, space.dof_map[cells]
    if np.any(mesh.facet_cells[facets, 1] < 0):
        raise ValueError(f"{op} needs interior facets")
    c0, b0 = facet_bary(mesh, facets, 0, t)
    c1, b1 = facet_bary(mesh, facets, 1, t)
    if op in ("jump", "avg"):
        t0 = space.tabulate("value", c0, b0)
        t1 = space.tabulate("value", c1, b1)
        s = -1.0 if op == "jump" else 1.0
        w = 1.0 if op == "jump" else 0.5
        data = np.concatenate([w * t0, s * w * t1], axis=3)
    elif op == "normal_grad_jump":
        n = mesh.facet_normals[facets]  # (F, 2)
        g0 = space.tabulate("grad", c0, b0)
        g1 = space.tabulate("grad", c1, b1)
        v = space.value_dim
        F, P = g0.shape[:2]

        def ndot(g):
            return np.einsum("fpcjn,fj->fpcn", g.reshape(F, P, v, 2, -1), n)
        data = np.concatenate([ndot(g0), -ndot(g1)], axis=3)
    else:
        raise ValueError(f"{op!r} is not a facet operator")
    cols = np.concatenate([space.dof_map[c0], space.dof_map[c1]], axis=1)
    return data, cols


def eval_points(expr: AffineFieldExpr, measure, rule, entities=None, mesh=None) -> PointRows:
    """Evaluate ``expr`` at every quadrature point of ``measure``."""
    if mesh is None:
        mesh = _expr_mesh(expr)
    kind, ents = measure_entities(mesh, measure)
    if entities is not None:
        ents = np.asarray(entities, dtype=np.int64)
    if rule.domain != kind:
        raise ValueError(f"{rule.domain} rule used on a {kind} measure")
    dom = expr.domain
    if dom == "facet" and kind == "cell":
        raise ValueError("facet operator evaluated on a cell measure")
    npts = rule.num_points
    k = expr.dim
    if kind == "cell":
        weights = mesh.cell_areas[ents][:, None] * rule.weights[None, :]
    else:
        weights = mesh.facet_lengths[ents][:, None] * rule.weights[None, :]
    const = np.broadcast_to(expr.const, (len(ents), npts, k)).copy()
    blocks = {}
    for t in expr.terms:
        space = t.target.space
        if kind == "cell":
            data = _apply_cell_op(space, t.op, ents, rule.points, t.arg)
            cols = space.dof_map[ents]
        else:
            op = t.op
            if op in CELL_OPS:
                if op != "value":
                    raise ValueError(f"cell operator {op!r} on a facet measure needs trace semantics")
                op = "trace"
            data, cols = _facet_op(space, op, ents, rule.points, t.arg)
        data = np.einsum("ij,epjn->epin", t.coeff, data)
        if t.is_data:
            const += np.einsum("epin,en->epi", data, t.target.values[cols])
            continue
        key = id(t.target)
        if key in blocks:
            old = blocks[key]
            blocks[key] = (t.target, np.concatenate([old[1], data], axis=3), np.concatenate([old[2], cols], axis=1))
        else:
            blocks[key] = (t.target, data, cols)
    return PointRows({v[0]: (v[1], v[2]) for v in blocks.values()}, const, weights, ents)


def _expr_mesh(expr):
    for t in expr.terms:
        return t.target.space.mesh
    raise ValueError("constant expression has no mesh; pass mesh explicitly")
