"""Triangular meshes of planar domains with facet connectivity."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

# boundary region ids on the bounding box of a mesh
INTERIOR = 0
BOTTOM, RIGHT, TOP, LEFT = 1, 2, 3, 4
OTHER_BOUNDARY = 5
REGION_NAMES = {"bottom": BOTTOM, "right": RIGHT, "top": TOP, "left": LEFT, "other": OTHER_BOUNDARY}


class InvalidMeshError(ValueError):
    pass


class MeshParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable 2D triangle mesh.

    Cells are stored counter-clockwise. Local facet ``k`` of a cell is the edge
    opposite to its local vertex ``k``. Each facet is stored once with sorted
    vertex pair; ``facet_cells[f, 1] == -1`` on the boundary.
    """

    vertex_coords: np.ndarray
    cells: np.ndarray
    facets: np.ndarray = field(repr=False)
    facet_cells: np.ndarray = field(repr=False)
    cell_facets: np.ndarray = field(repr=False)
    boundary_marker: np.ndarray = field(repr=False)

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_coords)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_facets(self) -> int:
        return len(self.facets)

    @property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    def region_facets(self, region) -> np.ndarray:
        """Boundary facets tagged with ``region`` (int, name, iterable of those, or "all")."""
        if isinstance(region, str) and region == "all":
            return self.boundary_facets
        ids = _region_ids(region)
        return np.flatnonzero(np.isin(self.boundary_marker, ids) & (self.facet_cells[:, 1] < 0))

    # geometry, vectorized over cells -------------------------------------------------
    @property
    def cell_areas(self) -> np.ndarray:
        return _cached(self, "_areas", lambda: 0.5 * _signed_double_area(self.vertex_coords, self.cells))

    @property
    def cell_jacobians(self) -> np.ndarray:
        """Jacobians of the affine maps from the reference triangle, shape (E, 2, 2)."""
        def build():
            x = self.vertex_coords[self.cells]
            return np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        return _cached(self, "_jac", build)

    @property
    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the three barycentric coordinates per cell, shape (E, 3, 2)."""
        def build():
            jinv_t = np.linalg.inv(self.cell_jacobians).transpose(0, 2, 1)
            ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
            return np.einsum("eij,kj->eki", jinv_t, ref)
        return _cached(self, "_bgrad", build)

    @property
    def cell_centroids(self) -> np.ndarray:
        return self.vertex_coords[self.cells].mean(axis=1)

    @property
    def facet_lengths(self) -> np.ndarray:
        def build():
            x = self.vertex_coords[self.facets]
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return _cached(self, "_flen", build)

    @property
    def facet_normals(self) -> np.ndarray:
        """Unit normals pointing out of the first adjacent cell, shape (F, 2)."""
        def build():
            x = self.vertex_coords[self.facets]
            t = x[:, 1] - x[:, 0]
            n = np.stack([t[:, 1], -t[:, 0]], axis=1) / self.facet_lengths[:, None]
            mid = x.mean(axis=1)
            c0 = self.cell_centroids[self.facet_cells[:, 0]]
            flip = np.einsum("ij,ij->i", n, mid - c0) < 0
            n[flip] *= -1
            return n
        return _cached(self, "_fnormal", build)

    @property
    def facet_midpoints(self) -> np.ndarray:
        return self.vertex_coords[self.facets].mean(axis=1)

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())

    def cell_geometry(self, cell_id: int):
        """Return (area, (origin, jacobian), inverse-transpose jacobian) of one cell."""
        _check_index(cell_id, self.num_cells, "cell")
        area = float(self.cell_areas[cell_id])
        if area <= 0:
            raise InvalidMeshError(f"degenerate cell {cell_id}")
        jac = self.cell_jacobians[cell_id]
        origin = self.vertex_coords[self.cells[cell_id, 0]]
        return area, (origin.copy(), jac.copy()), np.linalg.inv(jac).T

    def facet_geometry(self, facet_id: int):
        """Return (length, unit normal, orientation sign w.r.t. the first adjacent cell)."""
        _check_index(facet_id, self.num_facets, "facet")
        # normals are stored outward from facet_cells[f, 0], hence orientation +1
        return float(self.facet_lengths[facet_id]), self.facet_normals[facet_id].copy(), 1


def _cached(mesh, name, build):
    try:
        return mesh.__dict__[name]
    except KeyError:
        value = build()
        value.setflags(write=False)
        object.__setattr__(mesh, name, value)
        return value


def _check_index(i, n, what):
    if not 0 <= i < n:
        raise IndexError(f"{what} index {i} out of range [0, {n})")


def _region_ids(region):
    if isinstance(region, (int, np.integer)):
        return [int(region)]
    if isinstance(region, str):
        return [REGION_NAMES[region]]
    return [i for r in region for i in _region_ids(r)]


def _signed_double_area(coords, cells):
    x = coords[cells]
    d1 = x[:, 1] - x[:, 0]
    d2 = x[:, 2] - x[:, 0]
    return d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]


def build_facets(coords, cells):
    """Facet table of a triangulation.

    Returns ``(facets, facet_cells, cell_facets)``; facets are sorted vertex pairs in
    lexicographic order, which makes the numbering deterministic.
    """
    cells = np.asarray(cells, dtype=np.int64)
    ne = len(cells)
    local = np.array([[1, 2], [2, 0], [0, 1]])
    edges = np.sort(cells[:, local].reshape(-1, 2), axis=1)
    facets, inverse, counts = np.unique(edges, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if np.any(counts > 2):
        bad = facets[np.argmax(counts > 2)]
        raise InvalidMeshError(f"non-manifold facet {tuple(bad)} shared by {counts.max()} cells")
    cell_facets = inverse.reshape(ne, 3)
    owner = np.repeat(np.arange(ne), 3)
    order = np.argsort(inverse, kind="stable")
    facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
    sorted_f = inverse[order]
    first = np.r_[True, sorted_f[1:] != sorted_f[:-1]]
    facet_cells[sorted_f[first], 0] = owner[order][first]
    facet_cells[sorted_f[~first], 1] = owner[order][~first]
    return facets, facet_cells, cell_facets


def _classify_boundary(coords, facets, facet_cells, tol=1e-10):
    marker = np.zeros(len(facets), dtype=np.int64)
    bnd = facet_cells[:, 1] < 0
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    scale = tol * max(1.0, float(np.max(hi - lo)))
    x = coords[facets]
    marker[bnd] = OTHER_BOUNDARY
    for region, axis, value in ((BOTTOM, 1, lo[1]), (RIGHT, 0, hi[0]), (TOP, 1, hi[1]), (LEFT, 0, lo[0])):
        on = bnd & np.all(np.abs(x[:, :, axis] - value) <= scale, axis=1)
        marker[on] = region
    return marker


def make_mesh(coords, cells) -> TriMesh:
    """Validate raw arrays, orient cells counter-clockwise and build the facet table."""
    coords = np.array(coords, dtype=float).reshape(-1, 2)
    cells = np.array(cells, dtype=np.int64).reshape(-1, 3)
    if len(cells) == 0:
        raise InvalidMeshError("mesh has no cells")
    if cells.min() < 0 or cells.max() >= len(coords):
        raise InvalidMeshError("cell references a vertex out of range")
    if np.any(cells[:, 0] == cells[:, 1]) or np.any(cells[:, 1] == cells[:, 2]) or np.any(cells[:, 0] == cells[:, 2]):
        raise InvalidMeshError("cell with repeated vertex")
    dbl = _signed_double_area(coords, cells)
    scale = max(1.0, float(np.ptp(coords, axis=0).max())) ** 2
    if np.any(np.abs(dbl) <= 1e-14 * scale):
        raise InvalidMeshError(f"zero-area cell {int(np.argmin(np.abs(dbl)))}")
    cells = cells.copy()
    neg = dbl < 0
    cells[neg] = cells[neg][:, [0, 2, 1]]
    keys = np.sort(cells, axis=1)
    if len(np.unique(keys, axis=0)) != len(keys):
        raise InvalidMeshError("duplicated cell")
    facets, facet_cells, cell_facets = build_facets(coords, cells)
    marker = _classify_boundary(coords, facets, facet_cells)
    for a in (coords, cells, facets, facet_cells, cell_facets, marker):
        a.setflags(write=False)
    return TriMesh(coords, cells, facets, facet_cells, cell_facets, marker)


def unit_square_mesh(n: int, diagonal: str = "right") -> TriMesh:
    """Structured mesh of [0, 1]^2 with ``n`` subdivisions per side.

    ``right`` splits every square along its (+1, +1) diagonal, ``left`` along the
    other one, ``crossed`` adds the square center and uses four triangles.
    """
    return rectangle_mesh(n, n, 1.0, 1.0, diagonal)


def rectangle_mesh(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0, diagonal: str = "right") -> TriMesh:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"subdivisions must be positive integers, got ({nx}, {ny})")
    if diagonal not in ("left", "right", "crossed"):
        raise ValueError(f"unknown diagonal {diagonal!r}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    coords = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    v0 = (j * (nx + 1) + i).ravel()
    v1, v2, v3 = v0 + 1, v0 + nx + 2, v0 + nx + 1  # ccw: (x0,y0) (x1,y0) (x1,y1) (x0,y1)
    if diagonal == "right":
        cells = np.stack([np.column_stack([v0, v1, v2]), np.column_stack([v0, v2, v3])], axis=1)
    elif diagonal == "left":
        cells = np.stack([np.column_stack([v0, v1, v3]), np.column_stack([v1, v2, v3])], axis=1)
    else:
        c = len(coords) + np.arange(nx * ny)
        centers = np.column_stack([(X[:-1, :-1] + X[1:, 1:]).ravel() / 2, (Y[:-1, :-1] + Y[1:, 1:]).ravel() / 2])
        coords = np.vstack([coords, centers])
        cells = np.stack([np.column_stack([v0, v1, c]), np.column_stack([v1, v2, c]),
                          np.column_stack([v2, v3, c]), np.column_stack([v3, v0, c])], axis=1)
    return make_mesh(coords, cells.reshape(-1, 3))


def read_mesh(stream) -> TriMesh:
    """Parse the ASCII node/cell format: ``V E`` then V lines ``x y`` then E lines ``i j k``."""
    if isinstance(stream, (str, bytes)) and not hasattr(stream, "read"):
        stream = io.StringIO(stream.decode() if isinstance(stream, bytes) else stream)
    lines = [(no, ln.split()) for no, ln in enumerate(stream, start=1)]
    lines = [(no, tok) for no, tok in lines if tok and not tok[0].startswith("#")]
    if not lines:
        raise MeshParseError("empty mesh file", 1)
    no, head = lines[0]
    if len(head) != 2:
        raise MeshParseError("expected header 'V E'", no)
    try:
        nv, ne = int(head[0]), int(head[1])
    except ValueError:
        raise MeshParseError("header counts must be integers", no) from None
    if len(lines) < 1 + nv + ne:
        raise MeshParseError(f"expected {nv} vertices and {ne} cells, file is truncated", lines[-1][0])
    coords = np.empty((nv, 2))
    for k in range(nv):
        no, tok = lines[1 + k]
        try:
            if len(tok) != 2:
                raise ValueError
            coords[k] = float(tok[0]), float(tok[1])
        except ValueError:
            raise MeshParseError("expected vertex line 'x y'", no) from None
    cells = np.empty((ne, 3), dtype=np.int64)
    for k in range(ne):
        no, tok = lines[1 + nv + k]
        try:
            if len(tok) != 3:
                raise ValueError
            cells[k] = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError("expected cell line 'i j k'", no) from None
        if cells[k].min() < 0 or cells[k].max() >= nv:
            raise MeshParseError(f"vertex index out of range [0, {nv})", no)
    if len(lines) > 1 + nv + ne:
        raise MeshParseError("trailing content after cells", lines[1 + nv + ne][0])
    return make_mesh(coords, cells)


def write_mesh(mesh: TriMesh, stream=None):
    """Write ``mesh`` in the format read by :func:`read_mesh` (17 significant digits)."""
    out = stream if stream is not None else io.StringIO()
    out.write(f"{mesh.num_vertices} {mesh.num_cells}\n")
    for x, y in mesh.vertex_coords:
        out.write(f"{x:.17g} {y:.17g}\n")
    for i, j, k in mesh.cells:
        out.write(f"{i} {j} {k}\n")
    if stream is None:
        return out.getvalue()
    return None
