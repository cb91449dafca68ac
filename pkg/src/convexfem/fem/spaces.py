"""Finite element spaces on triangle meshes.

All tabulation is vectorized over cells: points are given per cell as barycentric
coordinates of shape ``(ncells, npts, 3)`` and results have shape
``(ncells, npts, opdim, nloc)`` where ``nloc`` counts local dofs of all
components.
"""
from __future__ import annotations

import numpy as np

from ..mesh import TriMesh, _region_ids
from .quadrature import QuadRule

SUPPORTED = {("CG", 1), ("CG", 2), ("DG", 0), ("DG", 1), ("CR", 1), ("RT", 1), ("Real", 0)}
_ALIASES = {"P": "CG", "Lagrange": "CG", "Discontinuous Lagrange": "DG", "R": "Real",
            "Crouzeix-Raviart": "CR", "RT1": "RT"}
_EDGES = np.array([[1, 2], [2, 0], [0, 1]])  # local facet k is opposite local vertex k


class UnsupportedError(ValueError):
    pass


# scalar Lagrange-type bases as functions of barycentrics -----------------------------
def _scalar_basis(family, degree, lam):
    """Values (..., n), first derivatives (..., n, 3), second derivatives (n, 3, 3) w.r.t. barycentrics."""
    shape = lam.shape[:-1]
    if family in ("DG", "Real") and degree == 0:
        return np.ones(shape + (1,)), np.zeros(shape + (1, 3)), np.zeros((1, 3, 3))
    eye = np.eye(3)
    if degree == 1 and family in ("CG", "DG"):
        return lam.copy(), np.broadcast_to(eye, shape + (3, 3)).copy(), np.zeros((3, 3, 3))
    if family == "CR":
        return 1 - 2 * lam, np.broadcast_to(-2 * eye, shape + (3, 3)).copy(), np.zeros((3, 3, 3))
    if family == "CG" and degree == 2:
        vals = np.empty(shape + (6,))
        d1 = np.zeros(shape + (6, 3))
        d2 = np.zeros((6, 3, 3))
        for i in range(3):
            vals[..., i] = lam[..., i] * (2 * lam[..., i] - 1)
            d1[..., i, i] = 4 * lam[..., i] - 1
            d2[i, i, i] = 4.0
        for k, (a, b) in enumerate(_EDGES):
            vals[..., 3 + k] = 4 * lam[..., a] * lam[..., b]
            d1[..., 3 + k, a] = 4 * lam[..., b]
            d1[..., 3 + k, b] = 4 * lam[..., a]
            d2[3 + k, a, b] = d2[3 + k, b, a] = 4.0
        return vals, d1, d2
    raise UnsupportedError(f"no scalar basis for {family}{degree}")


class FunctionSpace:
    """Discrete space ``family``/``degree`` with ``value_dim`` stacked components.

    Global dof numbering is interleaved: component ``c`` of base dof ``i`` is
    ``i * value_dim + c``. RT1 is vector valued by construction (value_dim 2).
    """

    def __init__(self, mesh: TriMesh, family: str, degree: int, value_dim: int = 1):
        family = _ALIASES.get(family, family)
        if (family, degree) not in SUPPORTED:
            raise ValueError(f"unsupported element ({family}, {degree})")
        if family == "RT":
            if value_dim not in (1, 2):
                raise ValueError("RT1 value dimension is fixed to 2")
            value_dim = 2
        if int(value_dim) != value_dim or value_dim < 1:
            raise ValueError(f"invalid value_dim {value_dim}")
        self.mesh = mesh
        self.family = family
        self.degree = degree
        self.value_dim = int(value_dim)
        self._base_map = self._build_base_map()
        self.num_base = int(self._base_map.max()) + 1 if family != "Real" else 1
        if family == "RT":
            self.dof_map = self._base_map
            self.num_dofs = self.num_base
        else:
            v = self.value_dim
            self.dof_map = (self._base_map[:, :, None] * v + np.arange(v)).reshape(mesh.num_cells, -1)
            self.num_dofs = self.num_base * v
        self.dof_map.setflags(write=False)

    def __repr__(self):
        return f"FunctionSpace({self.family}{self.degree}, value_dim={self.value_dim}, N={self.num_dofs})"

    @property
    def is_cell_local(self) -> bool:
        return self.family == "DG"

    def _build_base_map(self):
        m = self.mesh
        E = m.num_cells
        fam, deg = self.family, self.degree
        if fam == "CG" and deg == 1:
            return np.asarray(m.cells)
        if fam == "CG" and deg == 2:
            return np.hstack([m.cells, m.num_vertices + m.cell_facets])
        if fam == "DG" and deg == 0:
            return np.arange(E)[:, None]
        if fam == "DG" and deg == 1:
            return np.arange(3 * E).reshape(E, 3)
        if fam in ("CR", "RT"):
            return np.asarray(m.cell_facets)
        return np.zeros((E, 1), dtype=np.int64)  # Real

    # --- dof geometry ------------------------------------------------------------
    def dof_coordinates(self) -> np.ndarray:
        """Coordinates of the base (per component) dof nodes."""
        m = self.mesh
        fam, deg = self.family, self.degree
        if fam == "CG" and deg == 1:
            return m.vertex_coords.copy()
        if fam == "CG" and deg == 2:
            return np.vstack([m.vertex_coords, m.facet_midpoints])
        if fam == "DG" and deg == 0:
            return m.cell_centroids
        if fam == "DG" and deg == 1:
            return m.vertex_coords[m.cells].reshape(-1, 2)
        if fam == "CR":
            return m.facet_midpoints
        if fam == "Real":
            return m.vertex_coords.mean(axis=0, keepdims=True)
        raise UnsupportedError("RT dofs are facet fluxes, not point values")

    def boundary_dofs(self, region="all", component=None) -> np.ndarray:
        """Global dofs located on boundary facets of ``region``."""
        m = self.mesh
        facets = m.region_facets(region)
        if self.family == "CG":
            base = np.unique(m.facets[facets].ravel())
            if self.degree == 2:
                base = np.concatenate([base, m.num_vertices + facets])
        elif self.family == "CR":
            base = facets
        else:
            raise UnsupportedError(f"no boundary dofs for {self.family}{self.degree}")
        comps = range(self.value_dim) if component is None else [component]
        dofs = (base[:, None] * self.value_dim + np.array(list(comps))[None, :]).ravel()
        return np.unique(dofs)

    # --- tabulation --------------------------------------------------------------
    def tabulate(self, kind: str, cells: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Tabulate basis ``value``, ``grad`` or ``hessian`` on given cells.

        ``bary`` is ``(npts, 3)`` (same points for all cells) or ``(ncells, npts, 3)``.
        Returns ``(ncells, npts, opdim, nloc)`` with opdim ``v``, ``2 v``, ``4 v``
        (row-major per component) respectively.
        """
        cells = np.asarray(cells, dtype=np.int64)
        bary = np.asarray(bary, dtype=float)
        if bary.ndim == 2:
            bary = np.broadcast_to(bary, (len(cells),) + bary.shape)
        if self.family == "RT":
            return self._tabulate_rt(kind, cells, bary)
        if self.family == "Real":
            shape = bary.shape[:2]
            if kind == "value":
                return np.ones(shape + (1, 1))
            return np.zeros(shape + ({"grad": 2, "hessian": 4}[kind], 1))
        vals, d1, d2 = _scalar_basis(self.family, self.degree, bary)
        if kind == "value":
            scal = vals[:, :, None, :]
        elif kind == "grad":
            bg = self.mesh.barycentric_gradients[cells]  # (E, 3, 2)
            scal = np.einsum("epnk,ekj->epjn", d1, bg)
        elif kind == "hessian":
            bg = self.mesh.barycentric_gradients[cells]
            h = np.einsum("nkl,eki,elj->enij", d2, bg, bg).reshape(len(cells), 1, d2.shape[0], 4)
            scal = np.broadcast_to(h.transpose(0, 1, 3, 2), (len(cells), bary.shape[1], 4, d2.shape[0]))
        else:
            raise ValueError(f"unknown tabulation kind {kind!r}")
        return _vectorize(scal, self.value_dim)

    def _rt_signs(self, cells):
        m = self.mesh
        # global facet normal: tangent (lo -> hi vertex) rotated clockwise
        x = m.vertex_coords[m.facets]
        t = x[:, 1] - x[:, 0]
        nglob = np.stack([t[:, 1], -t[:, 0]], axis=1)
        f = m.cell_facets[cells]  # (E, 3)
        xc = m.vertex_coords[m.cells[cells]]  # (E, 3, 2)
        outward = m.vertex_coords[m.facets[f, 0]] - xc  # from opposite vertex to the facet
        return np.sign(np.einsum("ekj,ekj->ek", nglob[f], outward))

    def _tabulate_rt(self, kind, cells, bary):
        m = self.mesh
        xc = m.vertex_coords[m.cells[cells]]  # (E, 3, 2)
        coef = self._rt_signs(cells) * m.facet_lengths[m.cell_facets[cells]] / (2 * m.cell_areas[cells][:, None])
        if kind == "value":
            x = np.einsum("epk,ekj->epj", bary, xc)
            val = (x[:, :, None, :] - xc[:, None, :, :]) * coef[:, None, :, None]  # (E, P, n, 2)
            return val.transpose(0, 1, 3, 2)
        shape = bary.shape[:2]
        if kind == "grad":
            g = np.zeros((len(cells), 4, 3))
            g[:, 0] = coef
            g[:, 3] = coef
            return np.broadcast_to(g[:, None], shape + (4, 3)).copy()
        if kind == "hessian":
            return np.zeros(shape + (8, 3))
        raise ValueError(f"unknown tabulation kind {kind!r}")


def _vectorize(scal, v):
    """Expand scalar tabulation (E, P, d, n) to v stacked components (E, P, d*v, n*v)."""
    if v == 1:
        return np.ascontiguousarray(scal)
    E, P, d, n = scal.shape
    out = np.zeros((E, P, v, d, n, v))
    for c in range(v):
        out[:, :, c, :, :, c] = scal
    return out.reshape(E, P, v * d, n * v)


class QuadratureSpace:
    """Point values attached to the quadrature points of a cell rule (one block per point)."""

    family = "Quadrature"
    degree = 0

    def __init__(self, mesh: TriMesh, rule: QuadRule, value_dim: int = 1):
        if rule.domain != "cell":
            raise ValueError("quadrature spaces live on cell rules")
        self.mesh = mesh
        self.rule = rule
        self.value_dim = int(value_dim)
        nq = rule.num_points
        self.num_dofs = mesh.num_cells * nq * self.value_dim
        self.dof_map = np.arange(self.num_dofs).reshape(mesh.num_cells, nq * self.value_dim)
        self.dof_map.setflags(write=False)

    def __repr__(self):
        return f"QuadratureSpace({self.rule.name}, value_dim={self.value_dim}, N={self.num_dofs})"

    is_cell_local = True

    def tabulate(self, kind, cells, bary):
        bary = np.asarray(bary, dtype=float)
        if bary.ndim == 3:
            if not np.allclose(bary, bary[:1]):
                raise ValueError("quadrature spaces are evaluated at their own points only")
            bary = bary[0]
        if kind != "value":
            raise ValueError("quadrature space fields have no derivatives")
        pts = self.rule.points
        idx = []
        for p in bary:
            hit = np.flatnonzero(np.all(np.abs(pts - p) < 1e-14, axis=1))
            if len(hit) == 0:
                raise ValueError("point does not belong to the quadrature rule of this space")
            idx.append(hit[0])
        v = self.value_dim
        out = np.zeros((len(cells), len(idx), v, self.rule.num_points * v))
        for p, g in enumerate(idx):
            for c in range(v):
                out[:, p, c, g * v + c] = 1.0
        return out

    def boundary_dofs(self, region="all", component=None):
        raise UnsupportedError("quadrature spaces have no boundary dofs")


def function_space(mesh: TriMesh, family: str, degree: int, value_dim: int = 1) -> FunctionSpace:
    return FunctionSpace(mesh, family, degree, value_dim)


def vector_space(mesh: TriMesh, family: str, degree: int) -> FunctionSpace:
    return FunctionSpace(mesh, family, degree, 2)


class DiscreteField:
    """Dof values of a field in a space."""

    def __init__(self, space, values=None, name: str = "f"):
        self.space = space
        if values is None:
            values = np.zeros(space.num_dofs)
        values = np.asarray(values, dtype=float).reshape(-1)
        if len(values) != space.num_dofs:
            raise ValueError(f"expected {space.num_dofs} dof values, got {len(values)}")
        self.values = values
        self.name = name

    def __len__(self):
        return len(self.values)

    def eval_cells(self, kind: str, cells, bary) -> np.ndarray:
        """Field ``value``/``grad``/``hessian`` at barycentric points, shape (ncells, npts, opdim)."""
        cells = np.asarray(cells, dtype=np.int64)
        tab = self.space.tabulate(kind, cells, bary)
        return np.einsum("epkn,en->epk", tab, self.values[self.space.dof_map[cells]])

    def __call__(self, points) -> np.ndarray:
        """Point evaluation by cell location (brute force; for tests and output)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cells, bary = locate(self.space.mesh, pts)
        out = np.stack([self.eval_cells("value", [c], b[None])[0, 0] for c, b in zip(cells, bary)])
        return out[:, 0] if out.shape[1] == 1 else out


def locate(mesh: TriMesh, points, tol=1e-12):
    """Cell index and barycentric coordinates of each point."""
    x = mesh.vertex_coords[mesh.cells]
    jinv = np.linalg.inv(mesh.cell_jacobians)
    cells, bary = [], []
    for p in np.atleast_2d(points):
        ref = np.einsum("eij,ej->ei", jinv, p - x[:, 0])
        lam = np.column_stack([1 - ref.sum(axis=1), ref])
        c = int(np.argmax(lam.min(axis=1)))
        if lam[c].min() < -1e-9:
            raise ValueError(f"point {p} outside the mesh")
        cells.append(c)
        bary.append(lam[c])
    return np.array(cells), np.array(bary)


def interpolate(space, func, name: str = "f") -> DiscreteField:
    """Nodal interpolation of ``func`` (constant, sequence, or callable on (n, 2) points)."""
    if space.family == "RT":
        raise UnsupportedError("interpolation onto RT spaces is not supported")
    if space.family == "Quadrature":
        lam = space.rule.points
        x = np.einsum("pk,ekj->epj", lam, space.mesh.vertex_coords[space.mesh.cells]).reshape(-1, 2)
    else:
        x = space.dof_coordinates()
    v = space.value_dim
    if callable(func):
        vals = np.asarray(func(x), dtype=float)
    else:
        vals = np.broadcast_to(np.asarray(func, dtype=float), (len(x), v) if np.ndim(func) else (len(x),))
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 1:
        if v != 1:
            vals = np.repeat(vals[:, None], v, axis=1)
    vals = vals.reshape(len(x), v)
    return DiscreteField(space, vals.ravel().copy(), name)


def region_ids(region):
    return _region_ids(region)
