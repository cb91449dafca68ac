"""Flat conic programs ``min c.x  s.t.  bl <= A x <= bu,  lx <= x <= ux,  x in K``."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

CONE_KINDS = ("FREE", "NONNEG", "QUAD", "RQUAD")


@dataclass
class StandardConicProgram:
    """Conic program in ranged-row form.

    ``cones`` is an int array ``(ncones, 3)`` of ``(kind code, start, dim)`` with
    kind codes indexing :data:`CONE_KINDS`; variables not covered by a cone are
    free. ``blocks`` and ``row_blocks`` map names to index slices.
    """

    c: np.ndarray
    A: sp.csr_matrix
    bl: np.ndarray
    bu: np.ndarray
    lx: np.ndarray
    ux: np.ndarray
    cones: np.ndarray
    obj_offset: float = 0.0
    sense: str = "minimize"
    blocks: dict = field(default_factory=dict)
    row_blocks: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def cone_segments(self):
        """Partition of ``range(num_vars)`` into (kind, start, dim), free gaps included."""
        segs = []
        pos = 0
        for kind, start, dim in sorted(map(tuple, self.cones), key=lambda t: t[1]):
            if start > pos:
                segs.append(("FREE", pos, start - pos))
            segs.append((CONE_KINDS[kind], int(start), int(dim)))
            pos = start + dim
        if pos < self.num_vars:
            segs.append(("FREE", pos, self.num_vars - pos))
        return segs

    def check(self):
        n = self.num_vars
        if self.A.shape[1] != n:
            raise ValueError(f"A has {self.A.shape[1]} columns for {n} variables")
        for name, arr, size in (("bl", self.bl, self.num_rows), ("bu", self.bu, self.num_rows),
                                ("lx", self.lx, n), ("ux", self.ux, n)):
            if len(arr) != size:
                raise ValueError(f"{name} has length {len(arr)}, expected {size}")
        covered = np.zeros(n, dtype=int)
        for kind, start, dim in self.cones:
            covered[start:start + dim] += 1
        if covered.max(initial=0) > 1:
            raise ValueError("overlapping cones")
        return self

    def objective(self, x) -> float:
        val = float(self.c @ x) + self.obj_offset
        return -val if self.sense == "maximize" else val


def cone_code(kind: str) -> int:
    return CONE_KINDS.index(kind.upper())


class ProgramBuilder:
    """Accumulates columns, rows, costs and cones, in insertion order."""

    def __init__(self):
        self.n = 0
        self.m = 0
        self._lx, self._ux, self._cost = [], [], []
        self._ri, self._ci, self._v = [], [], []
        self._bl, self._bu = [], []
        self._cones = []
        self._extra_cost = []
        self.offset = 0.0
        self.block_offset = {}
        self.blocks = {}
        self.row_blocks = {}

    def add_vars(self, size, lx=-np.inf, ux=np.inf, cost=0.0, name=None) -> int:
        start = self.n
        self._lx.append(np.broadcast_to(np.asarray(lx, dtype=float), (size,)).copy())
        self._ux.append(np.broadcast_to(np.asarray(ux, dtype=float), (size,)).copy())
        self._cost.append(np.broadcast_to(np.asarray(cost, dtype=float), (size,)).copy())
        self.n += size
        if name is not None:
            self.blocks[name] = slice(start, self.n)
        return start

    def add_cones(self, kind, starts, dim):
        starts = np.asarray(starts, dtype=np.int64).ravel()
        if kind.upper() == "FREE" or len(starts) == 0:
            return
        arr = np.empty((len(starts), 3), dtype=np.int64)
        arr[:, 0] = cone_code(kind)
        arr[:, 1] = starts
        arr[:, 2] = dim
        self._cones.append(arr)

    def add_rows(self, nrows, rows, cols, vals, bl, bu, name=None) -> int:
        """Append ``nrows`` rows; ``rows`` are local (0-based within the new rows)."""
        start = self.m
        self._ri.append(np.asarray(rows, dtype=np.int64).ravel() + start)
        self._ci.append(np.asarray(cols, dtype=np.int64).ravel())
        self._v.append(np.asarray(vals, dtype=float).ravel())
        self._bl.append(np.broadcast_to(np.asarray(bl, dtype=float), (nrows,)).copy())
        self._bu.append(np.broadcast_to(np.asarray(bu, dtype=float), (nrows,)).copy())
        self.m += nrows
        if name is not None:
            self.row_blocks[name] = slice(start, self.m)
        return start

    def add_cost(self, cols, vals):
        self._extra_cost.append((np.asarray(cols, dtype=np.int64).ravel(), np.asarray(vals, dtype=float).ravel()))

    def build(self, sense="minimize") -> StandardConicProgram:
        cat = lambda xs, dt=float: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)  # noqa: E731
        c = cat(self._cost)
        for cols, vals in self._extra_cost:
            np.add.at(c, cols, vals)
        A = sp.coo_matrix((cat(self._v), (cat(self._ri, np.int64), cat(self._ci, np.int64))),
                          shape=(self.m, self.n)).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        cones = np.concatenate(self._cones) if self._cones else np.zeros((0, 3), dtype=np.int64)
        prog = StandardConicProgram(c, A, cat(self._bl), cat(self._bu), cat(self._lx), cat(self._ux),
                                    cones, self.offset, sense, dict(self.blocks), dict(self.row_blocks))
        return prog.check()
