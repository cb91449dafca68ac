"""Reduction of ranged-row conic programs to ``min c.x  s.t.  A x = b,  x in K``.

``K`` is ordered as free variables, then nonnegative variables, then
second-order cones grouped by dimension. Rotated cones are mapped onto
quadratic cones by the orthogonal involution
``(z0, z1) <-> ((z0 + z1)/sqrt 2, (z0 - z1)/sqrt 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..program import CONE_KINDS, StandardConicProgram

_S2 = 1 / np.sqrt(2.0)


class InvalidProgramError(ValueError):
    pass


@dataclass
class CanonicalProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    offset: float
    nfree: int
    nlin: int
    soc: list  # [(dim, count, start)]
    # recovery: x_orig = T @ x[:ncols_orig_image] + shift (see Recovery)
    recovery: "Recovery"

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def ncone(self) -> int:
        return self.n - self.nfree

    @property
    def degree(self) -> int:
        return self.nlin + sum(cnt for _, cnt, _ in self.soc)


@dataclass
class Recovery:
    T: sp.csr_matrix  # (n_orig, n_canon)
    shift: np.ndarray  # (n_orig,)
    row_map: np.ndarray  # canonical row of each original row, -1 for dropped free rows
    n_orig: int


def _group_vars(prog: StandardConicProgram):
    """Assign each original variable a class: free/nonneg/quad/rquad with its cone id."""
    n = prog.num_vars
    kind = np.zeros(n, dtype=np.int64)  # 0 free
    cone_id = np.full(n, -1, dtype=np.int64)
    for k, (code, start, dim) in enumerate(prog.cones):
        kind[start:start + dim] = code
        cone_id[start:start + dim] = k
    return kind, cone_id


def canonicalize(prog: StandardConicProgram, dense_threshold: float = 0.2, min_rows_split: int = 200) -> CanonicalProgram:
    """Slack form of ``prog`` together with the map back to its variables and rows."""
    prog.check()
    n = prog.num_vars
    A = sp.csr_matrix(prog.A, dtype=float)
    bl, bu, lx, ux = (np.asarray(a, dtype=float) for a in (prog.bl, prog.bu, prog.lx, prog.ux))
    if np.any(bl > bu):
        raise InvalidProgramError(f"row {int(np.argmax(bl > bu))} has lower bound above upper bound")
    if np.any(lx > ux):
        raise InvalidProgramError(f"variable {int(np.argmax(lx > ux))} has lower bound above upper bound")
    if any(np.any(np.isnan(a)) for a in (bl, bu, lx, ux)) or np.any(~np.isfinite(prog.c)):
        raise InvalidProgramError("NaN in program data")
    kind, cone_id = _group_vars(prog)
    free = kind == 0
    fixed = free & (lx == ux)
    shift = np.where(fixed, lx, 0.0)
    lo_only = free & ~fixed & np.isfinite(lx) & ~np.isfinite(ux)
    up_only = free & ~fixed & ~np.isfinite(lx) & np.isfinite(ux)
    boxed = free & ~fixed & np.isfinite(lx) & np.isfinite(ux)
    unbounded = free & ~fixed & ~np.isfinite(lx) & ~np.isfinite(ux)
    shift[lo_only | boxed] = lx[lo_only | boxed]
    shift[up_only] = ux[up_only]

    # canonical columns: free, then nonneg (shifted free vars, original nonneg, slacks), then SOC
    cols_T = []  # (orig var, canon col, coeff)
    ncol = 0

    def take(idx, coeff=1.0):
        nonlocal ncol
        idx = np.asarray(idx, dtype=np.int64)
        cols = ncol + np.arange(len(idx))
        cols_T.append((idx, cols, np.broadcast_to(np.asarray(coeff, dtype=float), idx.shape)))
        ncol += len(idx)
        return cols

    take(np.flatnonzero(unbounded))
    nfree = ncol
    lin_start = ncol
    take(np.flatnonzero(lo_only | boxed), 1.0)
    boxed_cols = ncol - np.count_nonzero(lo_only | boxed) + np.flatnonzero(boxed[lo_only | boxed])
    take(np.flatnonzero(up_only), -1.0)
    nonneg_orig = np.flatnonzero(kind == CONE_KINDS.index("NONNEG"))
    take(nonneg_orig, 1.0)
    n_struct_lin = ncol - lin_start

    # extra rows for bounds on cone variables, and ranged/inequality rows need slacks
    conevar = ~free
    # a pinned cone variable is one equality; a slack pair would have no interior
    pinned = conevar & np.isfinite(lx) & (lx == ux)
    extra_lo = np.flatnonzero(conevar & ~pinned & np.isfinite(lx) & ~((kind == 1) & (lx <= 0)))
    extra_up = np.flatnonzero(conevar & ~pinned & np.isfinite(ux))
    extra_fix = np.flatnonzero(pinned)
    is_eq = bl == bu
    lo_fin = np.isfinite(bl)
    up_fin = np.isfinite(bu)
    row_lo = ~is_eq & lo_fin & ~up_fin
    row_up = ~is_eq & ~lo_fin & up_fin
    row_rng = ~is_eq & lo_fin & up_fin
    keep = is_eq | lo_fin | up_fin
    n_slack = (np.count_nonzero(row_lo) + np.count_nonzero(row_up) + 2 * np.count_nonzero(row_rng)
               + len(boxed_cols) + len(extra_lo) + len(extra_up))
    slack_start = ncol
    ncol += n_slack
    nlin = ncol - nfree

    # second-order cones, grouped by dimension in order of appearance
    soc = []
    socs = [(int(k), int(code), int(start), int(dim)) for k, (code, start, dim) in enumerate(prog.cones)
            if CONE_KINDS[code] in ("QUAD", "RQUAD")]
    for dim in sorted({d for *_, d in socs}):
        group = [s for s in socs if s[3] == dim]
        gstart = ncol
        for _, code, start, d in group:
            idx = np.arange(start, start + d)
            if CONE_KINDS[code] == "QUAD":
                take(idx, 1.0)
            else:
                # x_orig = R w with R = [[s, s], [s, -s]] (+) I
                c0 = ncol
                cols_T.append((np.array([start, start, start + 1, start + 1]),
                               np.array([c0, c0 + 1, c0, c0 + 1]), np.array([_S2, _S2, _S2, -_S2])))
                if d > 2:
                    cols_T.append((idx[2:], c0 + np.arange(2, d), np.ones(d - 2)))
                ncol += d
        soc.append((dim, len(group), gstart))
    n_canon = ncol

    oi = np.concatenate([t[0] for t in cols_T]) if cols_T else np.zeros(0, dtype=np.int64)
    ci = np.concatenate([t[1] for t in cols_T]) if cols_T else np.zeros(0, dtype=np.int64)
    vv = np.concatenate([t[2] for t in cols_T]) if cols_T else np.zeros(0)
    T = sp.csr_matrix((vv, (oi, ci)), shape=(n, n_canon))

    # rows: original rows (kept), then boxed-variable rows, then cone-variable bound rows
    kept = np.flatnonzero(keep)
    row_map = np.full(len(bl), -1, dtype=np.int64)
    row_map[kept] = np.arange(len(kept))
    A_main = A[kept] @ T
    rhs_main = np.where(is_eq[kept] | lo_fin[kept], bl[kept], bu[kept]) - A[kept] @ shift
    slack_rows, slack_cols, slack_vals = [], [], []
    s = slack_start
    extra_rows = []  # (cols, vals, rhs)
    m0 = len(kept)
    local = np.arange(len(kept))
    for mask, sign in ((row_lo[kept], -1.0), (row_up[kept], 1.0)):
        r = local[mask]
        slack_rows.append(r)
        slack_cols.append(s + np.arange(len(r)))
        slack_vals.append(np.full(len(r), sign))
        s += len(r)
    rr = local[row_rng[kept]]
    nr = len(rr)
    # a.x - s1 = bl ; s1 + s2 = bu - bl
    slack_rows.append(rr)
    slack_cols.append(s + np.arange(nr))
    slack_vals.append(np.full(nr, -1.0))
    rng_rows = m0 + np.arange(nr)
    extra_cols = [np.stack([s + np.arange(nr), s + nr + np.arange(nr)], axis=1)]
    extra_vals = [np.ones((nr, 2))]
    extra_rhs = [bu[kept][row_rng[kept]] - bl[kept][row_rng[kept]]]
    s += 2 * nr
    # boxed shifted free vars: x' + t = ux - lx
    nb = len(boxed_cols)
    extra_cols.append(np.stack([boxed_cols, s + np.arange(nb)], axis=1))
    extra_vals.append(np.ones((nb, 2)))
    bidx = np.flatnonzero(boxed)
    extra_rhs.append(ux[bidx] - lx[bidx])
    s += nb
    extra = [np.vstack(extra_cols).reshape(-1, 2), np.vstack(extra_vals).reshape(-1, 2), np.concatenate(extra_rhs)]
    n_simple_extra = len(extra[2])
    # bounds on cone variables: T_j.x - t = lx_j, T_j.x + t = ux_j, T_j.x = lx_j when pinned
    bound_rows_T, bound_sl, bound_rhs = [], [], []
    for idxs, sign, vals in ((extra_lo, -1.0, lx), (extra_up, 1.0, ux)):
        for j in idxs:
            bound_rows_T.append(T[j])
            bound_sl.append((s, sign))
            bound_rhs.append(vals[j])
            s += 1
    for j in extra_fix:
        bound_rows_T.append(T[j])
        bound_sl.append((0, 0.0))
        bound_rhs.append(lx[j])
    assert s == n_canon - sum(d * cnt for d, cnt, _ in soc), "slack bookkeeping"

    blocks = [A_main + sp.csr_matrix((np.concatenate(slack_vals), (np.concatenate(slack_rows), np.concatenate(slack_cols))),
                                     shape=(m0, n_canon))]
    ne = n_simple_extra
    blocks.append(sp.csr_matrix((extra[1].ravel(), (np.repeat(np.arange(ne), 2), extra[0].ravel())), shape=(ne, n_canon)))
    if bound_rows_T:
        Tb = sp.vstack(bound_rows_T).tocsr()
        Sb = sp.csr_matrix(([v for _, v in bound_sl], (np.arange(len(bound_sl)), [c for c, _ in bound_sl])),
                           shape=(len(bound_sl), n_canon))
        blocks.append(Tb + Sb)
    A_c = sp.vstack(blocks).tocsr()
    b_c = np.concatenate([rhs_main, extra[2], np.asarray(bound_rhs, dtype=float)])
    A_c.eliminate_zeros()
    c_c = T.T @ prog.c
    offset = float(prog.c @ shift) + prog.obj_offset

    # split dense columns of free variables into chained copies
    A_c, c_c, T, nfree = _split_dense_columns(A_c, c_c, T, nfree, dense_threshold, min_rows_split)
    if len(b_c) < A_c.shape[0]:
        b_c = np.concatenate([b_c, np.zeros(A_c.shape[0] - len(b_c))])
    shift_cols = A_c.shape[1] - n_canon
    soc = [(d, cnt, st + shift_cols) for d, cnt, st in soc]
    rec = Recovery(T, shift, row_map, n)
    return CanonicalProgram(np.asarray(c_c, dtype=float), A_c, b_c, offset, nfree, nlin, soc, rec)


def _split_dense_columns(A, c, T, nfree, threshold, min_rows):
    """Replace each dense free column by copies on row chunks linked by equalities."""
    m, n = A.shape
    if m < min_rows or nfree == 0:
        return A, c, T, nfree
    coo = A.tocoo()
    counts = np.bincount(coo.col, minlength=n)[:nfree]
    dense = np.flatnonzero(counts > threshold * m)
    if len(dense) == 0:
        return A, c, T, nfree
    chunk = max(1, int(threshold * m) // 2)
    rows, cols = coo.row.copy(), coo.col.copy()
    # copies are inserted at the end of the free block
    links = []
    new_of_entry = np.full(len(cols), -1)
    for j in dense:
        ent = np.flatnonzero(cols == j)
        ent = ent[np.argsort(rows[ent])]
        for k in range(chunk, len(ent), chunk):
            new_of_entry[ent[k:k + chunk]] = len(links)
            links.append(j)
    ncopy = len(links)
    cols = np.where(cols >= nfree, cols + ncopy, cols)
    moved = new_of_entry >= 0
    cols[moved] = nfree + new_of_entry[moved]
    link_rows = np.tile(np.arange(ncopy), 2) + m
    link_cols = np.concatenate([np.array(links), nfree + np.arange(ncopy)])
    link_vals = np.concatenate([np.ones(ncopy), -np.ones(ncopy)])
    A_new = sp.csr_matrix((np.concatenate([coo.data, link_vals]),
                           (np.concatenate([rows, link_rows]), np.concatenate([cols, link_cols]))),
                          shape=(m + ncopy, n + ncopy))
    c_new = np.concatenate([c[:nfree], np.zeros(ncopy), c[nfree:]])
    Tc = T.tocoo()
    tcols = np.where(Tc.col >= nfree, Tc.col + ncopy, Tc.col)
    T_new = sp.csr_matrix((Tc.data, (Tc.row, tcols)), shape=(T.shape[0], n + ncopy))
    return A_new, c_new, T_new, nfree + ncopy


def recover(canon: CanonicalProgram, x, y):
    """Original variables and original-row duals from a canonical primal-dual pair."""
    rec = canon.recovery
    x_orig = rec.T @ x + rec.shift
    y_orig = np.zeros(len(rec.row_map))
    ok = rec.row_map >= 0
    y_orig[ok] = y[rec.row_map[ok]]
    return x_orig, y_orig
