"""Block-structured convex variational problems.

A :class:`BlockProblem` holds ordered variable blocks (one finite element
space each), weak constraints tested against multiplier spaces, linear
objective forms and convex terms. :meth:`BlockProblem.assemble` flattens
everything into a :class:`~convexfem.program.StandardConicProgram`; columns
follow block order and auxiliary variables of convex terms come after all
blocks, rows are weak constraints first then convex-term rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .conic import Cone, ConvexTerm, expand_term, term_row_bounds
from .fem import AffineFieldExpr, DiscreteField, as_expr, assemble_linear_form, assemble_weak_block, interpolate
from .ipm import IpmResult, IpmSettings, solve
from .program import ProgramBuilder, StandardConicProgram


class InvalidStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class DirichletBC:
    """Fixed boundary values; ``value`` is a constant, a per-component vector or a callable of points."""

    region: object = "all"
    value: object = 0.0
    component: int | None = None


class VarBlock:
    """Handle of a variable block; usable inside field expressions."""

    def __init__(self, problem, index, space, name):
        self.problem = problem
        self.index = index
        self.space = space
        self.name = name

    def __repr__(self):
        return f"VarBlock({self.name!r}, {self.space!r})"

    @property
    def num_dofs(self) -> int:
        return self.space.num_dofs


@dataclass
class _VarInfo:
    handle: VarBlock
    lx: np.ndarray
    ux: np.ndarray
    cone: Cone | None


@dataclass
class _Constraint:
    name: str
    mult_space: object
    parts: list  # [(expr, measure, quad)]
    bl: object
    bu: object


@dataclass
class SolutionBundle:
    """Solver output mapped back onto the problem's spaces."""

    status: str
    objective: float
    fields: dict
    multipliers: dict
    result: IpmResult
    program: StandardConicProgram = None
    blocks: list = field(default_factory=list)

    def __getitem__(self, key):
        if isinstance(key, VarBlock):
            return self.fields[key.name]
        return self.fields[key]


def _as_bound(value, space, default):
    n = space.num_dofs
    if value is None:
        return np.full(n, default)
    if isinstance(value, DiscreteField):
        if value.space is not space:
            raise ValueError("bound field must live in the space of its variable block")
        return value.values.astype(float).copy()
    if callable(value):
        return interpolate(space, value).values
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape == (space.value_dim,) and space.value_dim > 1 and n != space.value_dim:
        return np.tile(arr, n // space.value_dim)
    if arr.shape != (n,):
        raise ValueError(f"bound of shape {arr.shape} for a block with {n} dofs")
    return arr.copy()


def _bc_values(space, bc: DirichletBC):
    dofs = space.boundary_dofs(bc.region, bc.component)
    v = space.value_dim
    if callable(bc.value):
        base = space.dof_coordinates()
        vals = np.asarray(bc.value(base[dofs // v]), dtype=float)
        if vals.ndim == 2:
            vals = vals[np.arange(len(dofs)), dofs % v]
        return dofs, vals
    val = np.asarray(bc.value, dtype=float)
    if val.ndim == 0:
        return dofs, np.full(len(dofs), float(val))
    if bc.component is not None:
        raise ValueError("vector boundary value given for a single component")
    return dofs, val[dofs % v]


class BlockProblem:
    """Builder of a discretized convex problem.

    With ``sense="maximize"`` the linear objective is maximized and convex
    terms act as penalties, i.e. they are subtracted from it.
    """

    def __init__(self, name: str = "problem", sense: str = "minimize"):
        if sense not in ("minimize", "maximize"):
            raise ValueError("sense must be 'minimize' or 'maximize'")
        self.name = name
        self.sense = sense
        self._vars: list[_VarInfo] = []
        self._constraints: list[_Constraint] = []
        self._costs: list[tuple[VarBlock, np.ndarray]] = []
        self._offset = 0.0
        self._terms: list[ConvexTerm] = []
        self._program = None
        self._layouts = {}

    # ----------------------------------------------------------------- declaration
    @property
    def blocks(self) -> list:
        return [v.handle for v in self._vars]

    def add_var(self, space, lx=None, ux=None, cone=None, bc=None, name=None):
        """Declare one block, or several when ``space`` is a list (other arguments then lists too)."""
        if isinstance(space, (list, tuple)):
            k = len(space)

            def per(a):
                return list(a) if isinstance(a, (list, tuple)) and len(a) == k else [a] * k
            names = name if isinstance(name, (list, tuple)) else [None] * k
            return [self.add_var(s, l, u, c, b, nm) for s, l, u, c, b, nm in
                    zip(space, per(lx), per(ux), per(cone), per(bc), names)]
        self._program = None
        idx = len(self._vars)
        name = name or f"x{idx}"
        if any(v.handle.name == name for v in self._vars):
            raise ValueError(f"duplicate block name {name!r}")
        handle = VarBlock(self, idx, space, name)
        lo = _as_bound(lx, space, -np.inf)
        hi = _as_bound(ux, space, np.inf)
        if isinstance(cone, str):
            cone = Cone(cone.upper(), space.value_dim if cone.upper() in ("QUAD", "RQUAD") else 1)
        if cone is not None and cone.kind != "FREE":
            if space.value_dim % cone.dim != 0:
                raise ValueError(f"cone of dim {cone.dim} does not divide the value dimension {space.value_dim}")
        bcs = [] if bc is None else ([bc] if isinstance(bc, DirichletBC) else list(bc))
        for b in bcs:  # later conditions override earlier ones
            dofs, vals = _bc_values(space, b)
            lo[dofs] = vals
            hi[dofs] = vals
        if np.any(lo > hi):
            raise ValueError(f"block {name!r}: lower bound above upper bound")
        self._vars.append(_VarInfo(handle, lo, hi, cone))
        return handle

    def _check_blocks(self, handles):
        for h in handles:
            if not isinstance(h, VarBlock) or h.problem is not self:
                raise InvalidStateError(f"reference to a variable block not declared in this problem: {h!r}")

    def _parts(self, A, measure, quad):
        if A is None:
            return []
        items = A if isinstance(A, list) else [A]
        parts = []
        for it in items:
            if it is None:
                continue
            if isinstance(it, tuple):
                expr = it[0]
                meas = it[1] if len(it) > 1 else measure
                q = it[2] if len(it) > 2 else None
            else:
                expr, meas, q = it, measure, quad
            expr = as_expr(expr)
            self._check_blocks(expr.blocks())
            parts.append((expr, meas, q))
        return parts

    def _add_constraint(self, mult_space, A, bl, bu, measure, quad, name):
        self._program = None
        parts = self._parts(A, measure, quad)
        for expr, _, _ in parts:
            if expr.dim != mult_space.value_dim:
                raise ValueError(f"constraint expression of dim {expr.dim} tested on a space of value dim "
                                 f"{mult_space.value_dim}")
        name = name or f"c{len(self._constraints)}"
        self._constraints.append(_Constraint(name, mult_space, parts, bl, bu))
        return name

    def add_eq_constraint(self, mult_space, A, b=0.0, measure="cells", quad=None, name=None):
        """``int psi . A = rhs`` for all ``psi`` in ``mult_space``.

        ``A`` is an expression (or list of expressions / ``(expr, measure[, quad])``
        tuples, summed). ``b`` is a constant, a vector with one entry per
        multiplier dof, or a data expression whose weak form gives the rhs.
        """
        return self._add_constraint(mult_space, A, b, b, measure, quad, name)

    def add_ineq_constraint(self, mult_space, A, bl=None, bu=None, measure="cells", quad=None, name=None):
        return self._add_constraint(mult_space, A, -np.inf if bl is None else bl, np.inf if bu is None else bu,
                                    measure, quad, name)

    def add_obj_func(self, form, measure="cells", quad=None):
        """Add a linear objective.

        ``form`` is a scalar expression integrated over ``measure``, a dict
        ``{block: vector}``, or a list aligned with the blocks whose entries are
        numbers, vectors or ``None``.
        """
        self._program = None
        if form is None:
            return
        if isinstance(form, (list, tuple)) and not isinstance(form, AffineFieldExpr):
            blocks = self.blocks
            if len(form) > len(blocks):
                raise ValueError(f"{len(form)} objective entries for {len(blocks)} blocks")
            for h, f in zip(blocks, form):
                if f is not None:
                    self._add_cost(h, f)
            return
        if isinstance(form, dict):
            for h, f in form.items():
                self._add_cost(h, f)
            return
        expr = as_expr(form)
        self._check_blocks(expr.blocks())
        vecs, off = assemble_linear_form(expr, measure, quad)
        for h, v in vecs.items():
            self._add_cost(h, v)
        self._offset += off

    def _add_cost(self, h, f):
        self._check_blocks([h])
        if isinstance(f, AffineFieldExpr):
            raise ValueError("use a scalar expression form, not a per-block expression")
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            arr = np.full(h.num_dofs, float(arr))
        if arr.shape != (h.num_dofs,):
            raise ValueError(f"objective vector of length {arr.size} for block {h.name!r} with {h.num_dofs} dofs")
        if np.any(arr):
            self._costs.append((h, arr))

    def add_convex_term(self, term: ConvexTerm):
        self._check_blocks(term.expr.blocks())
        self._program = None
        self._terms.append(term)

    # ----------------------------------------------------------------- assembly
    def _constraint_rows(self, con: _Constraint):
        M = con.mult_space.num_dofs
        mats = {}
        const = np.zeros(M)
        for expr, meas, q in con.parts:
            blk_mats, rhs = assemble_weak_block(con.mult_space, expr, meas, q)
            const += rhs
            for h, mat in blk_mats.items():
                mats[h] = mats[h] + mat if h in mats else mat
        bl = self._rhs(con.bl, con, M)
        bu = bl if con.bu is con.bl else self._rhs(con.bu, con, M)
        return mats, bl - const, bu - const

    def _rhs(self, b, con, M):
        if isinstance(b, AffineFieldExpr):
            if b.blocks():
                raise ValueError("constraint rhs must not depend on variable blocks")
            meas = con.parts[0][1] if con.parts else "cells"
            q = con.parts[0][2] if con.parts else None
            _, rhs = assemble_weak_block(con.mult_space, b, meas, q)
            return rhs
        arr = np.asarray(b, dtype=float)
        if arr.ndim == 0:
            return np.full(M, float(arr))
        if arr.shape != (M,):
            raise ValueError(f"rhs of shape {arr.shape} for {M} multiplier dofs")
        return arr

    def assemble(self) -> StandardConicProgram:
        if not self._vars:
            raise ValueError("empty problem: declare at least one variable block")
        B = ProgramBuilder()
        for info in self._vars:
            h = info.handle
            start = B.add_vars(h.num_dofs, info.lx, info.ux, name=h.name)
            B.block_offset[id(h)] = start
            if info.cone is not None and info.cone.kind != "FREE":
                d = info.cone.dim
                B.add_cones(info.cone.kind, start + d * np.arange(h.num_dofs // d), d)
        # maximize: the linear part is negated, convex terms stay penalties
        sgn = -1.0 if self.sense == "maximize" else 1.0
        for h, vec in self._costs:
            B.add_cost(B.block_offset[id(h)] + np.arange(h.num_dofs), sgn * vec)
        B.offset += sgn * self._offset
        for con in self._constraints:
            mats, bl, bu = self._constraint_rows(con)
            ri, ci, vv = [], [], []
            for h, mat in mats.items():
                coo = mat.tocoo()
                ri.append(coo.row)
                ci.append(coo.col + B.block_offset[id(h)])
                vv.append(coo.data)
            cat = (lambda a: np.concatenate(a) if a else np.zeros(0))
            B.add_rows(con.mult_space.num_dofs, cat(ri), cat(ci), cat(vv), bl, bu, name=con.name)
        self._layouts = {}
        for k, term in enumerate(self._terms):
            lay = expand_term(term, B)
            if lay is not None:
                self._layouts[k] = lay
        prog = B.build(self.sense)
        self._program = prog
        return prog

    @property
    def program(self) -> StandardConicProgram:
        return self._program if self._program is not None else self.assemble()

    def term_layout(self, term: ConvexTerm):
        """Placement of an expanded convex term (after assembly)."""
        self.program
        for k, t in enumerate(self._terms):
            if t is term:
                return self._layouts.get(k)
        raise KeyError("term not part of this problem")

    def rebind_term(self, term: ConvexTerm):
        """Refresh the row bounds of ``term`` after data fields in its expression changed.

        This is the fast path for time stepping with a moving quadratic shift:
        the program is updated in place instead of being rebuilt.
        """
        if self._program is None:
            return
        lay = self.term_layout(term)
        if lay is None:
            return
        if np.any(term.repr.cost_x() != 0):
            self._program = None
            return
        for con, start, (bl, bu) in zip(term.repr.constraints, lay.row_starts, term_row_bounds(term)):
            self._program.bl[start:start + len(bl)] = bl
            self._program.bu[start:start + len(bu)] = bu

    def set_bounds(self, block: VarBlock, lx=None, ux=None):
        """Replace the bounds of a block, keeping Dirichlet-fixed dofs (equal bounds) intact."""
        self._check_blocks([block])
        info = self._vars[block.index]
        fixed = info.lx == info.ux
        if lx is not None:
            info.lx = np.where(fixed, info.lx, _as_bound(lx, block.space, -np.inf))
        if ux is not None:
            info.ux = np.where(fixed, info.ux, _as_bound(ux, block.space, np.inf))
        if self._program is not None:
            sl = self._program.blocks[block.name]
            self._program.lx[sl] = info.lx
            self._program.ux[sl] = info.ux

    # ----------------------------------------------------------------- solution
    def optimize(self, settings: IpmSettings | None = None) -> SolutionBundle:
        prog = self.program
        res = solve(prog, settings)
        return self.bundle(res)

    def bundle(self, res: IpmResult) -> SolutionBundle:
        prog = self.program
        fields = {}
        for info in self._vars:
            h = info.handle
            fields[h.name] = DiscreteField(h.space, res.x[prog.blocks[h.name]], h.name)
        sign = -1.0 if self.sense == "maximize" else 1.0
        mults = {}
        for con in self._constraints:
            sl = prog.row_blocks[con.name]
            mults[con.name] = DiscreteField(con.mult_space, sign * res.y[sl], con.name)
        return SolutionBundle(res.status, res.objective, fields, mults, res, prog, self.blocks)
