"""Homogeneous self-dual interior-point method for LP/SOCP.

The embedding is

    A x - b tau = 0,   A' y + z - c tau = 0,   c'x - b'y + kappa = 0,

with ``z`` zero on free variables, ``x_K, z in K`` and ``tau, kappa >= 0``.
Search directions use Nesterov-Todd scaling and a Mehrotra predictor-corrector.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..program import CONE_KINDS, StandardConicProgram
from .canonical import CanonicalProgram, canonicalize, recover
from .cones import ConeLayout, NTScaling, circ, inv_circ, max_step
from .kkt import KKTSystem

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter")


def _inf(v):
    return float(np.max(np.abs(v), initial=0.0))


@dataclass
class IpmSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 100
    static_reg: float = 1e-9
    step_fraction: float = 0.99
    refine_steps: int = 2
    equilibrate: bool = True
    dense_threshold: float = 0.2
    # the iteration runs on a cost of max-norm ``cost_norm`` and the dual
    # residual and gap are checked at max-norm ``check_cost_norm``; both make
    # the run independent of a positive rescaling of ``c``.  ``None`` keeps
    # the units of the given cost.
    cost_norm: float | None = 1e-2
    check_cost_norm: float | None = 1.0
    log: Callable[[str], None] | None = None

    def __post_init__(self):
        for name in ("feas_tol", "gap_tol", "max_iter", "static_reg", "step_fraction"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("cost_norm", "check_cost_norm"):
            if getattr(self, name) is not None and not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.step_fraction < 1:
            raise ValueError("step_fraction must be below 1")


@dataclass
class IpmResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    bound_duals: np.ndarray
    cone_slacks: np.ndarray
    objective: float
    residuals: dict
    iterations: int
    solve_time: float = 0.0
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ----------------------------------------------------------------------------------------
def _ruiz(A, nfree, layout, iters=15):
    """Row and column scalings ``D, E`` equilibrating ``D A E``, uniform on each cone."""
    m, n = A.shape
    d = np.ones(m)
    e = np.ones(n)
    B = A.tocsr().copy()
    absB = abs(B)
    for _ in range(iters):
        rmax = np.asarray(absB.max(axis=1).todense()).ravel() if m else np.zeros(0)
        cmax = np.asarray(absB.max(axis=0).todense()).ravel()
        dr = 1 / np.sqrt(np.where(rmax > 0, rmax, 1.0))
        dc = 1 / np.sqrt(np.where(cmax > 0, cmax, 1.0))
        # one factor per second-order cone
        for dim, cnt, s in layout.soc:
            blk = dc[nfree + s:nfree + s + dim * cnt].reshape(cnt, dim)
            blk[:] = np.exp(np.log(blk).mean(axis=1))[:, None]
        d *= dr
        e *= dc
        absB = sp.diags(dr) @ absB @ sp.diags(dc)
        if np.all(np.abs(dr - 1) < 1e-3) and np.all(np.abs(dc - 1) < 1e-3):
            break
    return d, e


class _Problem:
    """Canonical data with the cost rescaled to max-norm ``cost_norm``, possibly equilibrated.

    Iterating on a cost of fixed norm makes the iterates equivariant under a positive
    rescaling of ``c``; results are reported for the original cost.
    """

    def __init__(self, canon: CanonicalProgram, settings: IpmSettings):
        self.canon = canon
        self.nfree = canon.nfree
        rel = [(d, c, s - canon.nfree) for d, c, s in canon.soc]
        self.layout = ConeLayout(canon.nlin, rel)
        cmax = _inf(canon.c)
        tn, tc = settings.cost_norm, settings.check_cost_norm
        self.cost_scale = tn / cmax if tn is not None and cmax > 0 else 1.0
        A, b, c = canon.A, canon.b, canon.c * self.cost_scale
        if settings.equilibrate and A.nnz > 0:
            self.D, self.E = _ruiz(A, self.nfree, self.layout)
        else:
            self.D, self.E = np.ones(A.shape[0]), np.ones(A.shape[1])
        self.A = (sp.diags(self.D) @ A @ sp.diags(self.E)).tocsr()
        self.b = self.D * b
        self.c = self.E * c
        self.b_norm = _inf(b)
        self.c_norm = _inf(canon.c)
        self.crit_scale = tc / cmax if tc is not None and cmax > 0 else 1.0


def _unscale(P: _Problem, x, y, z):
    nf = P.nfree
    xs = P.E * x
    ys = P.D * y / P.cost_scale
    zs = z / P.E[nf:] / P.cost_scale
    return xs, ys, zs


def _canonical_residuals(P: _Problem, x, y, z, tau):
    """Residuals of the iterate divided by ``tau``, without equilibration."""
    canon = P.canon
    xs, ys, zs = _unscale(P, x / tau, y / tau, z / tau)
    Ax = canon.A @ xs
    ATy = canon.A.T @ ys
    rp = Ax - canon.b
    zf = np.concatenate([np.zeros(P.nfree), zs])
    rd = ATy + zf - canon.c
    pobj = float(canon.c @ xs)
    dobj = float(canon.b @ ys)
    # residuals relative to the size of the terms they balance; dual
    # quantities are measured on a normalized cost
    k = P.crit_scale
    pres = _inf(rp) / (1 + max(P.b_norm, _inf(Ax)))
    dres = k * _inf(rd) / (1 + k * max(P.c_norm, _inf(ATy), _inf(zs)))
    gap = k * abs(pobj - dobj) / (1 + k * abs(pobj + canon.offset))
    return pres, dres, gap, pobj, dobj


def solve(program: StandardConicProgram, settings: IpmSettings | None = None) -> IpmResult:
    """Solve ``program``; never raises on numerical trouble (status ``max_iter``)."""
    settings = settings or IpmSettings()
    t0 = time.perf_counter()
    canon = canonicalize(program, settings.dense_threshold)
    P = _Problem(canon, settings)
    status, x, y, z, tau, kappa, it, hist = _hsd(P, settings)
    res = _finish(program, P, status, x, y, z, tau, kappa, it, hist)
    res.solve_time = time.perf_counter() - t0
    return res


def _log(settings, msg):
    if settings.log is not None:
        settings.log(msg)


def _hsd(P: _Problem, st: IpmSettings):
    A, b, c = P.A, P.b, P.c
    m, n = A.shape
    nf = P.nfree
    lay = P.layout
    nu = lay.degree
    e = lay.unit()
    x = np.concatenate([np.zeros(nf), e])
    y = np.zeros(m)
    z = e.copy()
    tau = kappa = 1.0
    AT = A.T.tocsr()
    hist = []
    best = None
    kkt = KKTSystem(A, nf, lay, st.static_reg, st.refine_steps)
    status = "max_iter"
    _log(st, f"{'it':>3} {'pobj':>13} {'dobj':>13} {'pres':>9} {'dres':>9} {'gap':>9} {'mu':>9} {'step':>6}")
    step = 0.0
    for it in range(st.max_iter + 1):
        pres, dres, gap, pobj, dobj = _canonical_residuals(P, x, y, z, tau)
        mu = (x[nf:] @ z + tau * kappa) / (nu + 1)
        pobj, dobj = pobj + P.canon.offset, dobj + P.canon.offset
        hist.append(dict(iter=it, pobj=pobj, dobj=dobj, pres=pres, dres=dres, gap=gap, mu=mu, tau=tau,
                         kappa=kappa, step=step))
        _log(st, f"{it:3d} {pobj:13.6e} {dobj:13.6e} {pres:9.2e} {dres:9.2e} "
                 f"{gap:9.2e} {mu:9.2e} {step:6.3f}")
        merit = max(pres, dres, gap)
        if np.isfinite(merit) and (best is None or merit < best[0]):
            best = (merit, x.copy(), y.copy(), z.copy(), tau, kappa, it)
        if pres <= st.feas_tol and dres <= st.feas_tol and gap <= st.gap_tol:
            status = "optimal"
            break
        # infeasibility certificates from the unscaled ray
        xs, ys, zs = _unscale(P, x, y, z)
        by = float(P.canon.b @ ys)
        cx = float(P.canon.c @ xs)
        if by > 0:
            zf = np.concatenate([np.zeros(nf), zs])
            r = _inf(P.canon.A.T @ ys + zf)
            if r <= st.feas_tol * by and tau < 1e-3 * kappa:
                status = "infeasible"
                break
        if cx < 0:
            r = _inf(P.canon.A @ xs)
            if r <= st.feas_tol * -cx and tau < 1e-3 * kappa:
                status = "unbounded"
                break
        if it == st.max_iter:
            break
        try:
            # breakdowns surface as non-finite values, checked below
            with np.errstate(all="ignore"):
                x, y, z, tau, kappa, step = _iterate(A, AT, b, c, nf, lay, kkt, x, y, z, tau, kappa, mu, st)
        except (FloatingPointError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            _log(st, f"numerical breakdown: {exc}")
            break
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
            _log(st, "numerical breakdown: non-finite iterate")
            break
    if status == "max_iter" and best is not None:
        _, x, y, z, tau, kappa, _ = best
    return status, x, y, z, tau, kappa, it, hist


def _iterate(A, AT, b, c, nf, lay, kkt, x, y, z, tau, kappa, mu, st):
    xc = x[nf:]
    W = NTScaling.compute(lay, xc, z)
    lam = W.lam
    kkt.factor(W)
    rp = A @ x - b * tau
    rd = AT @ y - c * tau
    rd[nf:] += z
    rg = c @ x - b @ y + kappa

    x1y1 = kkt.solve(np.concatenate([c, b]))
    x1, y1 = x1y1[:len(x)], x1y1[len(x):]
    den = c @ x1 - b @ y1 - kappa / tau

    def direction(ds, dk, gamma):
        wl = W.apply_inv(inv_circ(lay, lam, ds))
        top = -(1 - gamma) * rd
        top[nf:] += wl
        sol = kkt.solve(np.concatenate([top, -(1 - gamma) * rp]))
        x2, y2 = sol[:len(x)], sol[len(x):]
        dtau = (-(1 - gamma) * rg + dk / tau - c @ x2 + b @ y2) / den
        dx = x2 + dtau * x1
        dy = y2 + dtau * y1
        dz = -wl - W.apply_hessian(dx[nf:])
        dkap = -(dk + kappa * dtau) / tau
        return dx, dy, dz, dtau, dkap

    def steplen(dx, dz, dtau, dkap):
        a = min(max_step(lay, xc, dx[nf:]), max_step(lay, z, dz))
        if dtau < 0:
            a = min(a, -tau / dtau)
        if dkap < 0:
            a = min(a, -kappa / dkap)
        return a

    # predictor
    dx, dy, dz, dtau, dkap = direction(circ(lay, lam, lam), tau * kappa, 0.0)
    a_aff = min(1.0, steplen(dx, dz, dtau, dkap))
    sigma = min(1.0, max(0.0, (1 - a_aff) ** 3))
    # corrector
    ds = circ(lay, lam, lam) + circ(lay, W.apply_inv(dx[nf:]), W.apply(dz)) - sigma * mu * lay.unit()
    dk = tau * kappa + dtau * dkap - sigma * mu
    dx, dy, dz, dtau, dkap = direction(ds, dk, sigma)
    a = min(1.0, st.step_fraction * steplen(dx, dz, dtau, dkap))
    return x + a * dx, y + a * dy, z + a * dz, tau + a * dtau, kappa + a * dkap, a


def _finish(program, P, status, x, y, z, tau, kappa, it, hist):
    canon = P.canon
    if status in ("infeasible", "unbounded"):
        scale = 1.0
    else:
        scale = 1.0 / tau
    xs, ys, zs = _unscale(P, x * scale, y * scale, z * scale)
    x_orig, y_orig = recover(canon, xs, ys)
    reduced = program.c - program.A.T @ y_orig
    in_cone = np.zeros(program.num_vars, dtype=bool)
    for code, start, dim in program.cones:
        in_cone[start:start + dim] = True
    bound_duals = np.where(in_cone, 0.0, reduced)
    cone_slacks = np.where(in_cone, reduced, 0.0)
    last = hist[-1] if hist else {}
    if status == "max_iter" and hist:
        # residuals of the returned (best) iterate
        pres, dres, gap, *_ = _canonical_residuals(P, x, y, z, tau)
        last = dict(pres=pres, dres=dres, gap=gap)
    residuals = dict(primal=last.get("pres", np.nan), dual=last.get("dres", np.nan), gap=last.get("gap", np.nan))
    if status in ("optimal", "max_iter"):
        objective = program.objective(x_orig)
    elif status == "infeasible":
        objective = np.inf if program.sense == "minimize" else -np.inf
    else:
        objective = -np.inf if program.sense == "minimize" else np.inf
    return IpmResult(status, x_orig, y_orig, bound_duals, cone_slacks, objective, residuals, it, history=hist)


# ----------------------------------------------------------------------------------------
def _cone_violation(program: StandardConicProgram, v) -> float:
    viol = 0.0
    for code, start, dim in program.cones:
        seg = v[start:start + dim]
        kind = CONE_KINDS[code]
        if kind == "NONNEG":
            viol = max(viol, float(np.max(-seg, initial=0.0)))
        elif kind == "QUAD":
            viol = max(viol, float(np.linalg.norm(seg[1:]) - seg[0]))
        elif kind == "RQUAD":
            # distance-like measure on the equivalent Quad point
            w0 = (seg[0] + seg[1]) / np.sqrt(2)
            w = np.concatenate([[(seg[0] - seg[1]) / np.sqrt(2)], seg[2:]])
            viol = max(viol, float(np.linalg.norm(w) - w0))
    return max(viol, 0.0)


def kkt_residuals(program: StandardConicProgram, x, y, slacks=None):
    """``(primal, dual, gap, cone)`` optimality residuals of a primal-dual pair.

    ``y`` are row duals and ``slacks`` the variable duals ``c - A'y`` (computed
    when omitted). Residuals are infinity norms; the gap is relative to
    ``1 + |c'x|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = program.A
    c = program.c
    ax = A @ x
    with np.errstate(invalid="ignore"):
        prim = np.concatenate([np.maximum(program.bl - ax, 0), np.maximum(ax - program.bu, 0),
                               np.maximum(program.lx - x, 0), np.maximum(x - program.ux, 0)])
    primal = float(np.nanmax(prim, initial=0.0))
    primal = max(primal, _cone_violation(program, x))
    z = c - A.T @ y if slacks is None else np.asarray(slacks, dtype=float)
    stat = c - A.T @ y - z
    dual = float(_inf(stat))
    # sign conditions of row duals
    ylo = np.isfinite(program.bl)
    yup = np.isfinite(program.bu)
    dual = max(dual, float(np.max(np.where(~ylo, np.maximum(y, 0), 0), initial=0.0)),
               float(np.max(np.where(~yup, np.maximum(-y, 0), 0), initial=0.0)))
    # variable duals: cone part must lie in the dual cone, bound part follows the bounds
    in_cone = np.zeros(len(x), dtype=bool)
    for code, start, dim in program.cones:
        in_cone[start:start + dim] = True
    zl = np.where(in_cone, 0.0, z)
    xlo = np.isfinite(program.lx)
    xup = np.isfinite(program.ux)
    dual = max(dual, float(np.max(np.where(~xlo & ~in_cone, np.maximum(zl, 0), 0), initial=0.0)),
               float(np.max(np.where(~xup & ~in_cone, np.maximum(-zl, 0), 0), initial=0.0)))
    zc = np.where(in_cone, z, 0.0)
    cone = max(_cone_violation(program, x), _cone_violation(program, zc))
    dual = max(dual, _cone_violation(program, zc))
    # dual objective of the ranged form; multipliers pushing against an infinite
    # bound are sign violations, already counted in the dual residual
    yp, yn = np.maximum(y, 0), np.maximum(-y, 0)
    zp, zn = np.maximum(zl, 0), np.maximum(-zl, 0)

    def part(mult, bound):
        return float(np.sum(mult[np.isfinite(bound)] * bound[np.isfinite(bound)]))
    dobj = part(yp, program.bl) - part(yn, program.bu) + part(zp, program.lx) - part(zn, program.ux)
    pobj = float(c @ x)
    gap = abs(pobj - dobj) / (1 + abs(pobj))
    return primal, dual, float(gap), cone
