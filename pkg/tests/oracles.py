"""Independent reference computations used by the test suite.

Nothing here calls the interior-point solver: every oracle is a closed form,
a direct linear solve or a first-order method.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from convexfem.program import ProgramBuilder


@dataclass
class GroupProblem:
    """``min 1/2 |M x - d|^2 + q.x + sum_g lam_g |x_g|``  s.t.  ``|x_g| <= r_g`` (ball groups), ``x_g >= 0``.

    Groups partition the coordinates; kinds are "norm", "ball", "normball" and "nonneg".
    """

    M: np.ndarray
    d: np.ndarray
    q: np.ndarray
    groups: list  # [(kind, index array, lam, radius)]

    def value(self, x):
        r = self.M @ x - self.d
        f = 0.5 * r @ r + self.q @ x
        for kind, idx, lam, _ in self.groups:
            if kind in ("norm", "normball"):
                f += lam * np.linalg.norm(x[idx])
        return f

    def prox(self, v, t):
        """Prox of ``t * (group terms + indicators)``; exact because every group term is radial or separable."""
        x = v.copy()
        for kind, idx, lam, rad in self.groups:
            g = x[idx]
            if kind == "nonneg":
                x[idx] = np.maximum(g, 0)
                continue
            nrm = np.linalg.norm(g)
            if kind in ("norm", "normball"):
                shrink = max(0.0, 1 - t * lam / nrm) if nrm > 0 else 0.0
                g = g * shrink
                nrm *= shrink
            if kind in ("ball", "normball") and nrm > rad:
                g = g * (rad / nrm)
            x[idx] = g
        return x


def random_group_problem(rng, max_vars=30) -> GroupProblem:
    """Random well-conditioned instance whose conic program has at most ``max_vars`` variables."""
    while True:
        n = int(rng.integers(2, 8))
        m = n + int(rng.integers(1, 3))
        M = rng.normal(size=(m, n))
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] < 0.3 * s[0]:
            continue
        d = rng.normal(size=m)
        q = rng.normal(size=n) * 0.5
        perm = rng.permutation(n)
        cuts = np.sort(rng.choice(np.arange(1, n), size=min(n - 1, int(rng.integers(1, 4))), replace=False))
        groups = []
        for idx in np.split(perm, cuts):
            kind = str(rng.choice(["norm", "ball", "normball", "nonneg"]))
            groups.append((kind, np.sort(idx), float(rng.uniform(0.1, 1.5)), float(rng.uniform(0.2, 1.5))))
        prob = GroupProblem(M, d, q, groups)
        if program_size(prob) <= max_vars:
            return prob


def program_size(p: GroupProblem) -> int:
    n = len(p.q)
    extra = sum(len(idx) + 1 for kind, idx, _, _ in p.groups if kind in ("norm", "ball"))
    extra += sum(2 * (len(idx) + 1) for kind, idx, _, _ in p.groups if kind == "normball")
    return n + len(p.d) + 2 + extra


def group_problem_program(p: GroupProblem):
    """Conic program of ``p``: epigraphs in rotated and plain second-order cones."""
    n, m = len(p.q), len(p.d)
    B = ProgramBuilder()
    lx = np.full(n, -np.inf)
    for kind, idx, _, _ in p.groups:
        if kind == "nonneg":
            lx[idx] = 0.0
    x = B.add_vars(n, lx=lx, cost=p.q, name="x")
    # (t, s, w) in RQuad, s = 1, w = M x - d  =>  t >= |M x - d|^2 / 2
    t = B.add_vars(m + 2, lx=[-np.inf, 1.0] + [-np.inf] * m, ux=[np.inf, 1.0] + [np.inf] * m,
                   cost=[1.0] + [0.0] * (m + 1))
    B.add_cones("RQUAD", [t], m + 2)
    rows, cols = np.nonzero(p.M)
    rr = np.concatenate([rows, np.arange(m)])
    cc = np.concatenate([x + cols, t + 2 + np.arange(m)])
    vv = np.concatenate([p.M[rows, cols], -np.ones(m)])
    B.add_rows(m, rr, cc, vv, p.d, p.d)
    for kind, idx, lam, rad in p.groups:
        k = len(idx)
        if kind in ("norm", "normball"):
            u = B.add_vars(k + 1, cost=[lam] + [0.0] * k)
            B.add_cones("QUAD", [u], k + 1)
            B.add_rows(k, np.r_[np.arange(k), np.arange(k)], np.r_[x + idx, u + 1 + np.arange(k)],
                       np.r_[np.ones(k), -np.ones(k)], 0.0, 0.0)
        if kind in ("ball", "normball"):
            v = B.add_vars(k + 1, lx=[rad] + [-np.inf] * k, ux=[rad] + [np.inf] * k)
            B.add_cones("QUAD", [v], k + 1)
            B.add_rows(k, np.r_[np.arange(k), np.arange(k)], np.r_[x + idx, v + 1 + np.arange(k)],
                       np.r_[np.ones(k), -np.ones(k)], 0.0, 0.0)
    return B.build()


def projected_gradient_oracle(p: GroupProblem, iters=20000, tol=1e-15):
    """Accelerated proximal (projected) gradient with adaptive restart; linear convergence here."""
    L = np.linalg.norm(p.M, 2) ** 2
    t = 1.0 / L
    n = len(p.q)
    x = np.zeros(n)
    x = p.prox(x, t)
    yk, theta = x.copy(), 1.0
    for _ in range(iters):
        g = p.M.T @ (p.M @ yk - p.d) + p.q
        xn = p.prox(yk - t * g, t)
        if (yk - xn) @ (xn - x) > 0:  # restart when momentum points uphill
            theta = 1.0
            yk = x.copy()
            continue
        thn = (1 + np.sqrt(1 + 4 * theta ** 2)) / 2
        yk = xn + (theta - 1) / thn * (xn - x)
        step = np.linalg.norm(xn - x)
        x, theta = xn, thn
        if step <= tol * (1 + np.linalg.norm(x)):
            break
    return x, p.value(x)


# ------------------------------------------------------------------ PDE oracles
def p1_stiffness_and_load(mesh, f):
    """Exact P1 stiffness matrix and centroid-rule load vector (independent of the library's assembly)."""
    import scipy.sparse as sp

    nv = mesh.num_vertices
    rows, cols, vals = [], [], []
    load = np.zeros(nv)
    for cell in mesh.cells:
        xy = mesh.vertex_coords[cell]
        J = np.array([xy[1] - xy[0], xy[2] - xy[0]]).T
        area = abs(np.linalg.det(J)) / 2
        G = np.linalg.solve(J.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]))
        K = area * G.T @ G
        for a in range(3):
            load[cell[a]] += f * area / 3
            for b in range(3):
                rows.append(cell[a])
                cols.append(cell[b])
                vals.append(K[a, b])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nv, nv)), load


def stokes_taylor_hood(mesh, mu=1.0, lid=1.0):
    """Lid-driven cavity Stokes flow with P2 velocity and P1 pressure, by one sparse direct solve.

    Own dof numbering (vertices, then edges) and an edge-midpoint quadrature,
    exact for the degree-2 integrands. The lid velocity is set on the open top
    edge; the top corners are no-slip. Returns node coordinates and velocities.
    """
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla

    X = mesh.vertex_coords
    nv = len(X)
    edge_id = {}
    cell_edges = np.empty((mesh.num_cells, 3), dtype=np.int64)
    for k, cell in enumerate(mesh.cells):
        for j, (a, b) in enumerate(((cell[1], cell[2]), (cell[2], cell[0]), (cell[0], cell[1]))):
            key = (min(a, b), max(a, b))
            cell_edges[k, j] = edge_id.setdefault(key, len(edge_id))
    nodes = np.vstack([X, np.array([(X[a] + X[b]) / 2 for a, b in edge_id])])
    nn = len(nodes)
    # quadrature at the edge midpoints (barycentric), weight area/3 each
    qpts = np.array([[0, 0.5, 0.5], [0.5, 0, 0.5], [0.5, 0.5, 0]])

    def p2_grads(lam, G):
        # basis: vertices l_i(2 l_i - 1), edge j opposite vertex j: 4 l_a l_b
        gl = G.T  # (3, 2) gradients of barycentrics
        out = [(4 * lam[i] - 1) * gl[i] for i in range(3)]
        for a, b in ((1, 2), (2, 0), (0, 1)):
            out.append(4 * (lam[a] * gl[b] + lam[b] * gl[a]))
        return np.array(out)  # (6, 2)

    Ki, Kj, Kv, Bi, Bj, Bv = [], [], [], [], [], []
    for k, cell in enumerate(mesh.cells):
        xy = X[cell]
        J = np.array([xy[1] - xy[0], xy[2] - xy[0]]).T
        area = abs(np.linalg.det(J)) / 2
        G = np.linalg.solve(J.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]))
        loc = np.concatenate([cell, nv + cell_edges[k]])
        Kloc = np.zeros((12, 12))
        Bloc = np.zeros((3, 12))
        for lam in qpts:
            dphi = p2_grads(lam, G)
            # strain of each vector basis function (component c, node a)
            eps = np.zeros((12, 2, 2))
            for a in range(6):
                for c in range(2):
                    gu = np.zeros((2, 2))
                    gu[c] = dphi[a]
                    eps[2 * a + c] = (gu + gu.T) / 2
            Kloc += area / 3 * 2 * mu * np.einsum("iab,jab->ij", eps, eps)
            divs = np.array([np.trace(e) for e in eps])
            Bloc += area / 3 * np.outer(lam, divs)
        gdofs = (2 * loc[:, None] + np.arange(2)[None]).ravel()
        Ki.append(np.repeat(gdofs, 12))
        Kj.append(np.tile(gdofs, 12))
        Kv.append(Kloc.ravel())
        Bi.append(np.repeat(cell, 12))
        Bj.append(np.tile(gdofs, 3))
        Bv.append(Bloc.ravel())
    n = 2 * nn
    K = sp.csr_matrix((np.concatenate(Kv), (np.concatenate(Ki), np.concatenate(Kj))), shape=(n, n))
    B = sp.csr_matrix((np.concatenate(Bv), (np.concatenate(Bi), np.concatenate(Bj))), shape=(nv, n))
    on_bnd = (np.isclose(nodes[:, 0], 0) | np.isclose(nodes[:, 0], 1) | np.isclose(nodes[:, 1], 0)
              | np.isclose(nodes[:, 1], 1))
    fixed = np.flatnonzero(np.repeat(on_bnd, 2))
    ub = np.zeros(n)
    lidnodes = np.isclose(nodes[:, 1], 1) & (nodes[:, 0] > 1e-12) & (nodes[:, 0] < 1 - 1e-12)
    ub[2 * np.flatnonzero(lidnodes)] = lid
    free = np.setdiff1d(np.arange(n), fixed)
    # the pressure is defined up to a constant: drop the first multiplier row
    Bf = B[1:]
    S = sp.bmat([[K[free][:, free], Bf[:, free].T], [Bf[:, free], None]], format="csc")
    rhs = np.concatenate([-K[free] @ ub, -Bf @ ub])
    sol = spla.spsolve(S, rhs)
    u = ub.copy()
    u[free] = sol[:len(free)]
    return nodes, u.reshape(nn, 2)
