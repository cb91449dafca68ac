"""Cones, conic representations of convex functions and their expansion over quadrature points.

A conic representable function is

    F(x) = min_y  c_x.x + c_y.y   s.t.  bl <= A_x x + A_y y <= bu,  y in K

and a convex term ``int F(expr(u))`` is discretized by one copy of this local
program per quadrature point, the copies being wired to the global unknowns
through the rows of ``expr`` at that point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fem.assembly import default_rule
from .fem.expr import AffineFieldExpr, as_expr, eval_points

log = logging.getLogger(__name__)

_MIN_DIM = {"FREE": 1, "NONNEG": 1, "QUAD": 1, "RQUAD": 2}


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        if self.kind not in _MIN_DIM:
            raise ValueError(f"unknown cone kind {self.kind!r}")

    def __repr__(self):
        return f"{self.kind.title()}({self.dim})"


def Free(dim=1):  # noqa: N802
    return Cone("FREE", dim)


def NonNeg(dim=1):  # noqa: N802
    return Cone("NONNEG", dim)


def Quad(dim):  # noqa: N802
    return Cone("QUAD", dim)


def RQuad(dim):  # noqa: N802
    return Cone("RQUAD", dim)


def cone_contains(cone: Cone, z, tol: float = 0.0) -> bool:
    """Membership test with additive slack ``tol`` on the defining inequalities."""
    z = np.asarray(z, dtype=float).ravel()
    if len(z) != cone.dim:
        raise ValueError(f"vector of length {len(z)} tested against {cone}")
    if cone.kind == "FREE":
        return True
    if cone.kind == "NONNEG":
        return bool(np.all(z >= -tol))
    if cone.kind == "QUAD":
        return bool(z[0] >= np.linalg.norm(z[1:]) - tol)
    return bool(z[0] >= -tol and z[1] >= -tol and 2 * z[0] * z[1] >= z[2:] @ z[2:] - tol)


@dataclass
class ReprConstraint:
    ax: np.ndarray | None  # (r, input_dim) or None
    ay: dict  # aux block index -> (r, dim_b)
    bl: np.ndarray
    bu: np.ndarray
    name: str = ""

    @property
    def nrows(self) -> int:
        return len(self.bl)


@dataclass
class ConicRepr:
    """Local conic program defining a convex function of an ``input_dim`` vector."""

    input_dim: int
    aux: list = field(default_factory=list)  # [(dim, Cone)]
    constraints: list = field(default_factory=list)
    c_x: np.ndarray | None = None
    c_y: dict = field(default_factory=dict)  # aux block index -> cost vector
    name: str = "F"
    closed_form: object = None  # callable X -> F(X) (inf outside domain), for oracles

    @property
    def naux(self) -> int:
        return int(sum(d for d, _ in self.aux))

    def aux_offsets(self):
        return np.concatenate([[0], np.cumsum([d for d, _ in self.aux])]).astype(int)

    # construction helpers mirroring the local block structure
    def add_var(self, dim=1, cone=None) -> int:
        self.aux.append((int(dim), cone if cone is not None else Free(dim)))
        return len(self.aux) - 1

    def add_eq_constraint(self, ax=None, ay=None, b=0.0, name=""):
        r = _rows(ax, ay)
        b = np.broadcast_to(np.asarray(b, dtype=float), (r,)).copy()
        self.constraints.append(ReprConstraint(_mat(ax), _aymap(ay), b, b.copy(), name or f"eq{len(self.constraints)}"))

    def add_ineq_constraint(self, ax=None, ay=None, bl=-np.inf, bu=np.inf, name=""):
        r = _rows(ax, ay)
        bl = np.broadcast_to(np.asarray(bl, dtype=float), (r,)).copy()
        bu = np.broadcast_to(np.asarray(bu, dtype=float), (r,)).copy()
        self.constraints.append(ReprConstraint(_mat(ax), _aymap(ay), bl, bu, name or f"ineq{len(self.constraints)}"))

    def set_linear_term(self, c_x=None, c_y=None):
        self.c_x = None if c_x is None else np.asarray(c_x, dtype=float).ravel()
        self.c_y = {int(k): np.asarray(v, dtype=float).ravel() for k, v in (c_y or {}).items()}

    # dense views
    def ay_full(self, con: ReprConstraint) -> np.ndarray:
        off = self.aux_offsets()
        out = np.zeros((con.nrows, self.naux))
        for b, mat in con.ay.items():
            out[:, off[b]:off[b + 1]] = mat
        return out

    def ax_full(self, con: ReprConstraint) -> np.ndarray:
        return np.zeros((con.nrows, self.input_dim)) if con.ax is None else con.ax

    def cost_y(self) -> np.ndarray:
        off = self.aux_offsets()
        out = np.zeros(self.naux)
        for b, vec in self.c_y.items():
            out[off[b]:off[b + 1]] = vec
        return out

    def cost_x(self) -> np.ndarray:
        return np.zeros(self.input_dim) if self.c_x is None else self.c_x

    def scaled(self, k: float) -> "ConicRepr":
        """Same feasible set, costs multiplied by ``k``."""
        out = ConicRepr(self.input_dim, list(self.aux), list(self.constraints),
                        None if self.c_x is None else k * self.c_x,
                        {b: k * v for b, v in self.c_y.items()}, self.name,
                        None if self.closed_form is None else (lambda X, f=self.closed_form: k * f(X)))
        return out


def _mat(a):
    return None if a is None else np.atleast_2d(np.asarray(a, dtype=float))


def _aymap(ay):
    if ay is None:
        return {}
    return {int(b): np.atleast_2d(np.asarray(m, dtype=float)) for b, m in dict(ay).items()}


def _rows(ax, ay):
    if ax is not None:
        return np.atleast_2d(ax).shape[0]
    for m in dict(ay or {}).values():
        return np.atleast_2d(m).shape[0]
    raise ValueError("constraint without coefficients")


def validate_repr(repr_: ConicRepr) -> list:
    """Return a list of diagnostics (empty when the representation is consistent)."""
    diags = []
    for b, (dim, cone) in enumerate(repr_.aux):
        if cone.dim != dim:
            diags.append(f"aux block {b}: cone {cone} does not match block dim {dim}")
        if cone.dim < _MIN_DIM[cone.kind]:
            diags.append(f"aux block {b}: {cone} below minimum dimension {_MIN_DIM[cone.kind]}")
    for con in repr_.constraints:
        r = con.nrows
        if len(con.bu) != r:
            diags.append(f"constraint {con.name!r}: bounds of different lengths")
        if con.ax is not None and con.ax.shape != (r, repr_.input_dim):
            diags.append(f"constraint {con.name!r}: input block has shape {con.ax.shape}, "
                         f"expected ({r}, {repr_.input_dim})")
        for b, mat in con.ay.items():
            if not 0 <= b < len(repr_.aux):
                diags.append(f"constraint {con.name!r}: references undeclared aux block {b}")
            elif mat.shape != (r, repr_.aux[b][0]):
                diags.append(f"constraint {con.name!r}: aux block {b} has shape {mat.shape}, "
                             f"expected ({r}, {repr_.aux[b][0]})")
        if np.any(np.asarray(con.bl) > np.asarray(con.bu)):
            diags.append(f"constraint {con.name!r}: lower bound above upper bound")
    if repr_.c_x is not None and len(repr_.c_x) != repr_.input_dim:
        diags.append(f"cost on input has length {len(repr_.c_x)}, expected {repr_.input_dim}")
    for b, vec in repr_.c_y.items():
        if not 0 <= b < len(repr_.aux):
            diags.append(f"cost references undeclared aux block {b}")
        elif len(vec) != repr_.aux[b][0]:
            diags.append(f"cost on aux block {b} has length {len(vec)}, expected {repr_.aux[b][0]}")
    return diags


@dataclass
class ConvexTerm:
    """``scale * int F(expr)`` over a measure, discretized with ``quad``.

    ``scale`` is a positive number or a positive array with one value per entity
    of the measure.
    """

    repr: ConicRepr
    expr: AffineFieldExpr
    measure: object = "cells"
    quad: object = None
    scale: object = 1.0

    def __post_init__(self):
        self.expr = as_expr(self.expr)
        if self.quad is None:
            self.quad = default_rule(self.measure)
        if self.repr.input_dim != self.expr.dim:
            raise ValueError(f"{self.repr.name} expects input of dim {self.repr.input_dim}, got {self.expr.dim}")
        s = np.asarray(self.scale, dtype=float)
        if np.any(s < 0):
            raise ValueError("convex term scale must be positive")

    def __rmul__(self, k):
        return ConvexTerm(self.repr, self.expr, self.measure, self.quad, k * np.asarray(self.scale))

    @property
    def is_zero(self) -> bool:
        return bool(np.all(np.asarray(self.scale) == 0))


@dataclass
class TermLayout:
    """Where an expanded term lives in the flat program."""

    aux_start: int
    naux_per_point: int
    npoints: int
    row_starts: list  # per repr constraint
    weights: np.ndarray  # (nent, npts) physical weights times scale


def expand_term(term: ConvexTerm, builder, mesh=None) -> TermLayout | None:
    """Append the expansion of ``term`` to a :class:`~convexfem.program.ProgramBuilder`.

    Variable blocks referenced by ``term.expr`` must already be registered in
    ``builder.block_offset``.
    """
    rep = term.repr
    diags = validate_repr(rep)
    if diags:
        raise ValueError(f"invalid representation {rep.name}: " + "; ".join(diags))
    if term.is_zero:
        log.warning("dropping convex term %s with zero scale", rep.name)
        return None
    for blk in term.expr.blocks():
        if id(blk) not in builder.block_offset:
            raise RuntimeError(f"expression references undeclared variable block {getattr(blk, 'name', blk)!r}")
    pr = eval_points(term.expr, term.measure, term.quad, mesh=mesh)
    nent, npts = pr.weights.shape
    P = nent * npts
    scale = np.asarray(term.scale, dtype=float)
    w = pr.weights * (scale[:, None] if scale.ndim == 1 else scale)
    naux = rep.naux
    cy = rep.cost_y()
    aux_start = builder.add_vars(P * naux, cost=(w.reshape(-1, 1) * cy[None, :]).ravel())
    off = rep.aux_offsets()
    base = aux_start + naux * np.arange(P)
    for b, (dim, cone) in enumerate(rep.aux):
        builder.add_cones(cone.kind, base + off[b], dim)
    const = pr.const.reshape(P, -1)
    cx = rep.cost_x()
    if np.any(cx != 0):
        for blk, (data, cols) in pr.blocks.items():
            vals = np.einsum("ep,k,epkn->en", w, cx, data)
            builder.add_cost(builder.block_offset[id(blk)] + cols, vals)
        builder.offset += float(np.sum(w.reshape(-1) * (const @ cx)))
    row_starts = []
    for con in rep.constraints:
        r = con.nrows
        ax = rep.ax_full(con)
        ay = rep.ay_full(con)
        ri, ci, vv = [], [], []
        for blk, (data, cols) in pr.blocks.items():
            loc = np.einsum("ik,epkn->epin", ax, data)  # (nent, npts, r, nloc)
            nloc = loc.shape[-1]
            rows = (np.arange(P).reshape(nent, npts, 1, 1) * r + np.arange(r).reshape(1, 1, r, 1))
            ri.append(np.broadcast_to(rows, loc.shape).ravel())
            c = builder.block_offset[id(blk)] + cols
            ci.append(np.broadcast_to(c[:, None, None, :], (nent, npts, r, nloc)).ravel())
            vv.append(loc.ravel())
        ii, aa = np.nonzero(ay)
        if len(ii):
            ri.append((np.arange(P)[:, None] * r + ii[None, :]).ravel())
            ci.append((base[:, None] + aa[None, :]).ravel())
            vv.append(np.broadcast_to(ay[ii, aa], (P, len(ii))).ravel())
        shift = const @ ax.T  # (P, r)
        bl = (con.bl[None, :] - shift).ravel()
        bu = (con.bu[None, :] - shift).ravel()
        if ri:
            start = builder.add_rows(P * r, np.concatenate(ri), np.concatenate(ci), np.concatenate(vv), bl, bu)
        else:
            start = builder.add_rows(P * r, [], [], [], bl, bu)
        row_starts.append(start)
    return TermLayout(aux_start, naux, P, row_starts, w)


def term_row_bounds(term: ConvexTerm, mesh=None):
    """Row bounds of an expanded term for its current expression constant (rebinding data)."""
    pr = eval_points(term.expr, term.measure, term.quad, mesh=mesh)
    P = pr.weights.size
    const = pr.const.reshape(P, -1)
    out = []
    for con in term.repr.constraints:
        shift = const @ term.repr.ax_full(con).T
        out.append(((con.bl[None, :] - shift).ravel(), (con.bu[None, :] - shift).ravel()))
    return out


def local_minimum(repr_: ConicRepr, X, settings=None):
    """Evaluate ``F(X)`` by solving the local conic program (``inf`` when infeasible)."""
    from .ipm import solve
    from .program import ProgramBuilder

    X = np.asarray(X, dtype=float).ravel()
    b = ProgramBuilder()
    off = repr_.aux_offsets()
    start = b.add_vars(repr_.naux, cost=repr_.cost_y())
    for k, (dim, cone) in enumerate(repr_.aux):
        b.add_cones(cone.kind, [start + off[k]], dim)
    for con in repr_.constraints:
        ay = repr_.ay_full(con)
        ii, aa = np.nonzero(ay)
        shift = repr_.ax_full(con) @ X
        b.add_rows(con.nrows, ii, aa, ay[ii, aa], con.bl - shift, con.bu - shift)
    b.offset = float(repr_.cost_x() @ X)
    prog = b.build()
    res = solve(prog, settings)
    if res.status == "infeasible":
        return np.inf
    if res.status != "optimal":
        raise RuntimeError(f"local program ended with status {res.status}")
    return res.objective
