"""Vectorized kernels for the product of a nonnegative orthant and second-order cones.

A cone vector is stored flat; ``ConeLayout`` knows the orthant length and the
``(dim, count, start)`` groups of second-order cones (offsets relative to the
start of the cone part). All scaling operations use Nesterov-Todd scaling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ConeLayout:
    nlin: int
    soc: list  # [(dim, count, start)] with start relative to the cone part

    @property
    def size(self) -> int:
        return self.nlin + sum(d * c for d, c, _ in self.soc)

    @property
    def degree(self) -> int:
        return self.nlin + sum(c for _, c, _ in self.soc)

    def groups(self, v):
        """Views ``(count, dim)`` of the second-order parts of ``v``."""
        return [v[s:s + d * c].reshape(c, d) for d, c, s in self.soc]

    def unit(self) -> np.ndarray:
        e = np.zeros(self.size)
        e[:self.nlin] = 1.0
        for g in self.groups(e):
            g[:, 0] = 1.0
        return e


def _jdet(u):
    return u[:, 0] ** 2 - np.einsum("ij,ij->i", u[:, 1:], u[:, 1:])


def circ(layout: ConeLayout, u, v):
    """Jordan product ``u o v``."""
    out = np.empty_like(u)
    n = layout.nlin
    out[:n] = u[:n] * v[:n]
    for (d, c, s), gu, gv in zip(layout.soc, layout.groups(u), layout.groups(v)):
        o = out[s:s + d * c].reshape(c, d)
        o[:, 0] = np.einsum("ij,ij->i", gu, gv)
        o[:, 1:] = gu[:, :1] * gv[:, 1:] + gv[:, :1] * gu[:, 1:]
    return out


def inv_circ(layout: ConeLayout, lam, v):
    """Solve ``lam o w = v`` for ``w``."""
    out = np.empty_like(v)
    n = layout.nlin
    out[:n] = v[:n] / lam[:n]
    for (d, c, s), gl, gv in zip(layout.soc, layout.groups(lam), layout.groups(v)):
        o = out[s:s + d * c].reshape(c, d)
        det = _jdet(gl)
        w0 = (gl[:, 0] * gv[:, 0] - np.einsum("ij,ij->i", gl[:, 1:], gv[:, 1:])) / det
        o[:, 0] = w0
        o[:, 1:] = (gv[:, 1:] - w0[:, None] * gl[:, 1:]) / gl[:, :1]
    return out


@dataclass
class NTScaling:
    """Scaling ``W`` with ``W z = W^{-1} s = lam``."""

    layout: ConeLayout
    wlin: np.ndarray  # sqrt(s / z)
    eta: list  # per group (count,)
    wbar: list  # per group (count, dim), wbar' J wbar = 1
    lam: np.ndarray

    @classmethod
    def compute(cls, layout: ConeLayout, s, z):
        n = layout.nlin
        wlin = np.sqrt(s[:n] / z[:n])
        etas, wbars = [], []
        for gs, gz in zip(layout.groups(s), layout.groups(z)):
            sn = np.sqrt(np.maximum(_jdet(gs), 1e-300))
            zn = np.sqrt(np.maximum(_jdet(gz), 1e-300))
            sb = gs / sn[:, None]
            zb = gz / zn[:, None]
            gamma = np.sqrt(np.maximum((1 + np.einsum("ij,ij->i", sb, zb)) / 2, 1e-300))
            wb = sb.copy()
            wb[:, 0] += zb[:, 0]
            wb[:, 1:] -= zb[:, 1:]
            wb /= 2 * gamma[:, None]
            etas.append(np.sqrt(sn / zn))
            wbars.append(wb)
        sc = cls(layout, wlin, etas, wbars, None)
        sc.lam = sc.apply(z)
        return sc

    def _apply(self, v, inverse=False):
        lay = self.layout
        out = np.empty_like(v)
        n = lay.nlin
        out[:n] = v[:n] / self.wlin if inverse else v[:n] * self.wlin
        for (d, c, s), gv, eta, wb in zip(lay.soc, lay.groups(v), self.eta, self.wbar):
            o = out[s:s + d * c].reshape(c, d)
            w0 = wb[:, 0]
            w1 = wb[:, 1:]
            sgn = -1.0 if inverse else 1.0
            dot = np.einsum("ij,ij->i", w1, gv[:, 1:])
            o[:, 0] = w0 * gv[:, 0] + sgn * dot
            o[:, 1:] = gv[:, 1:] + (sgn * gv[:, :1] + (dot / (1 + w0))[:, None]) * w1
            o *= (1 / eta if inverse else eta)[:, None]
        return out

    def apply(self, v):
        return self._apply(v, False)

    def apply_inv(self, v):
        return self._apply(v, True)

    def hessian_blocks(self):
        """``W^{-2}``: orthant diagonal and dense per-cone blocks ``(count, dim, dim)``."""
        diag = 1.0 / self.wlin ** 2
        blocks = []
        for (d, c, _), eta, wb in zip(self.layout.soc, self.eta, self.wbar):
            wj = wb.copy()
            wj[:, 1:] *= -1
            H = 2 * np.einsum("ci,cj->cij", wj, wj)
            H[:, 0, 0] -= 1
            idx = np.arange(1, d)
            H[:, idx, idx] += 1
            blocks.append(H / (eta ** 2)[:, None, None])
        return diag, blocks

    def apply_hessian(self, v):
        """``W^{-2} v``."""
        return self.apply_inv(self.apply_inv(v))


def max_step(layout: ConeLayout, u, du) -> float:
    """Largest ``a`` with ``u + a du`` in the cone (``u`` interior), possibly inf."""
    n = layout.nlin
    alpha = np.inf
    neg = du[:n] < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-u[:n][neg] / du[:n][neg])))
    for gu, gd in zip(layout.groups(u), layout.groups(du)):
        a = _jdet(gd)
        b = gu[:, 0] * gd[:, 0] - np.einsum("ij,ij->i", gu[:, 1:], gd[:, 1:])
        c = np.maximum(_jdet(gu), 0.0)
        disc = b * b - a * c
        roots = np.full(len(a), np.inf)
        # positive roots of a t^2 + 2 b t + c
        lin = a == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            sq = np.sqrt(np.maximum(disc, 0.0))
            q = -(b + np.where(b >= 0, sq, -sq))
            r1 = np.where(a != 0, q / a, np.inf)
            r2 = np.where(q != 0, c / q, np.inf)
            rl = np.where(b < 0, -c / (2 * b), np.inf)
        real = disc >= 0
        for r in (r1, r2):
            ok = real & ~lin & (r > 0)
            roots = np.where(ok, np.minimum(roots, r), roots)
        roots = np.where(lin, np.where(rl > 0, rl, np.inf), roots)
        # also keep the first coordinate nonnegative
        with np.errstate(divide="ignore", invalid="ignore"):
            r0 = np.where(gd[:, 0] < 0, -gu[:, 0] / gd[:, 0], np.inf)
        roots = np.minimum(roots, r0)
        if len(roots):
            alpha = min(alpha, float(roots.min()))
    return alpha


def in_cone_interior(layout: ConeLayout, u) -> bool:
    if np.any(u[:layout.nlin] <= 0):
        return False
    return all(np.all(g[:, 0] > 0) and np.all(_jdet(g) > 0) for g in layout.groups(u))
