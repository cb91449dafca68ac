"""Regularized quasi-definite Newton system with a fixed sparsity pattern."""
from __future__ import annotations

import numpy as np
import qdldl
import scipy.sparse as sp

from .cones import ConeLayout, NTScaling


def _inf(v):
    return float(np.max(np.abs(v), initial=0.0))


class KKTSystem:
    """``[[-(H + d I), A'], [A, d I]]`` with ``H = 0 (+) W^{-2}``.

    The upper triangle is laid out once; every update only recomputes the
    ``H`` values and refactors numerically with the same fill-reducing order.
    """

    def __init__(self, A: sp.csr_matrix, nfree: int, layout: ConeLayout, reg: float, refine_steps: int = 2):
        self.A = A.tocsr()
        self.AT = self.A.T.tocsr()
        self.p, self.n = A.shape
        self.nfree = nfree
        self.layout = layout
        self.reg = reg
        self.base_reg = reg
        self.refine_steps = refine_steps
        n, p = self.n, self.p
        rows, cols = [np.arange(n)], [np.arange(n)]
        # upper triangles of the dense cone blocks, strictly above the diagonal
        self._soc_tri = []
        for d, c, s in layout.soc:
            iu, ju = np.triu_indices(d, 1)
            base = nfree + s + d * np.arange(c)[:, None]
            rows.append((base + iu).ravel())
            cols.append((base + ju).ravel())
            self._soc_tri.append((iu, ju))
        coo = self.A.tocoo()
        rows += [coo.col, n + np.arange(p)]
        cols += [n + coo.row, n + np.arange(p)]
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        order = np.lexsort((r, c))
        self._order = order
        self._Adata = coo.data
        N = n + p
        indptr = np.concatenate([[0], np.cumsum(np.bincount(c, minlength=N))])
        self._indices = r[order].astype(np.int32)
        self._indptr = indptr.astype(np.int32)
        self.N = N
        self._solver = None
        self._hdiag = None
        self._hblocks = None

    def _values(self, scaling: NTScaling | None):
        n, nf = self.n, self.nfree
        diag = np.zeros(n)
        offd = []
        if scaling is not None:
            lin, blocks = scaling.hessian_blocks()
            nl = self.layout.nlin
            diag[nf:nf + nl] = lin
            for (d, c, s), B, (iu, ju) in zip(self.layout.soc, blocks, self._soc_tri):
                st = nf + s
                idx = np.arange(d)
                diag[st:st + d * c] = B[:, idx, idx].ravel()
                offd.append(-B[:, iu, ju].ravel())
            self._hblocks = blocks
        self._hdiag = diag
        vals = np.concatenate([-(diag + self.reg)] + offd + [self._Adata, np.full(self.p, self.reg)])
        return sp.csc_matrix((vals[self._order], self._indices, self._indptr), shape=(self.N, self.N))

    def factor(self, scaling: NTScaling | None):
        # an escalated regularization relaxes back toward its base value
        self.reg = max(self.base_reg, self.reg * 0.1)
        self._factor(scaling)

    def _factor(self, scaling):
        self.scaling = scaling
        K = self._values(scaling)
        if self._solver is None:
            self._solver = qdldl.Solver(K, upper=True)
        else:
            self._solver.update(K, upper=True)

    def _apply_unreg(self, v):
        """Product with the unregularized matrix ``[[-H, A'], [A, 0]]``."""
        n, nf = self.n, self.nfree
        x, y = v[:n], v[n:]
        top = self.AT @ y
        if self.scaling is not None:
            top[nf:] -= self.scaling.apply_hessian(x[nf:])
        return np.concatenate([top, self.A @ x])

    def solve(self, rhs, max_reg: float = 1e-4):
        """Solve with refinement; on a failed pivot sequence raise the
        regularization and refactor until the residual is acceptable."""
        while True:
            sol, rnorm = self._refined(rhs)
            if rnorm <= 1e-6 * (1 + _inf(rhs)) or self.reg * 100 > max_reg:
                break
            self.reg *= 100
            self._factor(self.scaling)
        if not np.all(np.isfinite(sol)):
            raise FloatingPointError("non-finite KKT solution")
        return sol

    def _refined(self, rhs):
        sol = self._solver.solve(rhs)
        if not np.all(np.isfinite(sol)):
            return sol, np.inf
        res = rhs - self._apply_unreg(sol)
        rnorm = _inf(res)
        for _ in range(self.refine_steps):
            if rnorm <= 1e-14 * (1 + _inf(rhs)):
                break
            cand = sol + self._solver.solve(res)
            cres = rhs - self._apply_unreg(cand)
            cnorm = _inf(cres)
            if not cnorm < rnorm:
                break
            sol, res, rnorm = cand, cres, cnorm
        return sol, rnorm
