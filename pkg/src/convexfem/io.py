"""File formats: binary PGM/PPM images, legacy VTK output and a plain-text conic program format."""
from __future__ import annotations

import io
import os
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .program import CONE_KINDS, StandardConicProgram


class ImageParseError(ValueError):
    pass


class UnsupportedImageError(ValueError):
    pass


class ProgramFormatError(ValueError):
    pass


def atomic_write(path, data, mode="w"):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------- images
@dataclass
class RasterImage:
    """8-bit image, ``data`` of shape (height, width, channels)."""

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError("images have 1 or 3 channels")
        self.data = np.asarray(self.data, dtype=np.uint8).reshape(self.height, self.width, self.channels)

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        h, w, c = arr.shape
        return cls(w, h, c, arr)


def _header_tokens(buf: bytes, count: int):
    """First ``count`` whitespace-separated header tokens (comments skipped) and the payload offset."""
    tokens = []
    i = 0
    n = len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= n:
            raise ImageParseError("truncated header")
        j = i
        while j < n and not buf[j:j + 1].isspace() and buf[j:j + 1] != b"#":
            j += 1
        tokens.append(buf[i:j])
        i = j
    if i >= n or not buf[i:i + 1].isspace():
        raise ImageParseError("missing whitespace after header")
    return tokens, i + 1


def read_image(source) -> RasterImage:
    """Read a binary PGM (P5) or PPM (P6) image with maxval 255."""
    if isinstance(source, (bytes, bytearray)):
        buf = bytes(source)
    elif isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            buf = fh.read()
    else:
        buf = source.read()
    if buf[:2] not in (b"P5", b"P6"):
        raise ImageParseError(f"unknown magic {buf[:2]!r}")
    tokens, off = _header_tokens(buf, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageParseError(f"malformed header: {exc}") from None
    if w <= 0 or h <= 0:
        raise ImageParseError("non-positive image size")
    if maxval != 255:
        raise UnsupportedImageError(f"maxval {maxval} not supported (only 255)")
    c = 1 if tokens[0] == b"P5" else 3
    size = w * h * c
    payload = buf[off:off + size]
    if len(payload) < size:
        raise ImageParseError(f"truncated payload: {len(payload)} of {size} bytes")
    return RasterImage(w, h, c, np.frombuffer(payload, dtype=np.uint8).copy())


def write_image(img: RasterImage, stream=None) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    out = magic + f"\n{img.width} {img.height}\n255\n".encode() + img.data.astype(np.uint8).tobytes()
    if stream is not None:
        stream.write(out)
    return out


# ---------------------------------------------------------------------------- VTK
def _field_samples(mesh, name, f):
    """(location, values (n, k)) for a field or a raw array."""
    if hasattr(f, "space"):
        sp_ = f.space
        fam = getattr(sp_, "family", "")
        v = sp_.value_dim
        if fam == "CG" and sp_.degree == 1:
            return "point", f.values.reshape(-1, v)
        if fam == "DG" and sp_.degree == 0:
            return "cell", f.values.reshape(-1, v)
        if fam == "Real":
            return "cell", np.repeat(f.values.reshape(1, -1), mesh.num_cells, axis=0)
        if fam == "Quadrature":
            return "cell", f.values.reshape(mesh.num_cells, -1, v).mean(axis=1)
        vals = f.eval_cells("value", np.arange(mesh.num_cells), np.full((1, 3), 1 / 3))[:, 0]
        return "cell", vals
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == mesh.num_vertices:
        return "point", arr
    if arr.shape[0] == mesh.num_cells:
        return "cell", arr
    raise ValueError(f"field {name!r} has {arr.shape[0]} values, matching neither vertices nor cells")


def _fmt(x):
    return format(float(x), ".12g")


def write_vtk(path_or_stream, mesh, fields, title="convexfem"):
    """Legacy ASCII unstructured grid with point and cell data.

    ``fields`` is a dict or a list of ``(name, field)`` pairs; fields are
    :class:`~convexfem.fem.DiscreteField` objects or arrays with one row per
    vertex or cell.
    """
    items = list(fields.items()) if isinstance(fields, dict) else list(fields)
    names = [str(n).replace(" ", "_") for n, _ in items]
    seen = set()
    for n in names:
        if n in seen:
            raise ValueError(f"duplicate field name {n!r}")
        seen.add(n)
    buf = io.StringIO()
    w = buf.write
    w("# vtk DataFile Version 3.0\n")
    w(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
    w(f"POINTS {mesh.num_vertices} double\n")
    for x, y in mesh.vertex_coords:
        w(f"{_fmt(x)} {_fmt(y)} 0\n")
    w(f"CELLS {mesh.num_cells} {4 * mesh.num_cells}\n")
    for a, b, c in mesh.cells:
        w(f"3 {a} {b} {c}\n")
    w(f"CELL_TYPES {mesh.num_cells}\n")
    w("5\n" * mesh.num_cells)
    groups = {"point": [], "cell": []}
    for n, (_, f) in zip(names, items):
        loc, vals = _field_samples(mesh, n, f)
        groups[loc].append((n, vals))
    for loc, head, count in (("point", "POINT_DATA", mesh.num_vertices), ("cell", "CELL_DATA", mesh.num_cells)):
        if not groups[loc]:
            continue
        w(f"{head} {count}\n")
        for n, vals in groups[loc]:
            k = vals.shape[1]
            if k == 2:
                w(f"VECTORS {n} double\n")
                for row in vals:
                    w(f"{_fmt(row[0])} {_fmt(row[1])} 0\n")
            elif k <= 4:
                w(f"SCALARS {n} double {k}\nLOOKUP_TABLE default\n")
                for row in vals:
                    w(" ".join(_fmt(v) for v in row) + "\n")
            else:
                w(f"FIELD {n} 1\n{n} {k} {count} double\n")
                for row in vals:
                    w(" ".join(_fmt(v) for v in row) + "\n")
    text = buf.getvalue()
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(text)
    else:
        atomic_write(path_or_stream, text)
    return text


# ---------------------------------------------------------------------------- programs
def _num(x):
    if np.isposinf(x):
        return "inf"
    if np.isneginf(x):
        return "-inf"
    return format(float(x), ".17g")


def export_program(prog: StandardConicProgram) -> str:
    """Text form of a program, exact to 17 significant digits."""
    out = io.StringIO()
    w = out.write
    w("# conic program: min c.x + offset, bl <= A x <= bu, lx <= x <= ux, x in K\n")
    w(f"SENSE {prog.sense}\nOFFSET {_num(prog.obj_offset)}\n")
    n = prog.num_vars
    w(f"VARS {n}\nBOUNDS\n")
    for i in range(n):
        w(f"{i} {_num(prog.lx[i])} {_num(prog.ux[i])}\n")
    segs = prog.cone_segments()
    w(f"CONES {len(segs)}\n")
    for kind, start, dim in segs:
        w(f"{kind} {start} {dim}\n")
    nz = np.flatnonzero(prog.c)
    w(f"OBJ {len(nz)}\n")
    for i in nz:
        w(f"{i} {_num(prog.c[i])}\n")
    A = prog.A.tocoo()
    order = np.lexsort((A.col, A.row))
    w(f"ROWS {prog.num_rows}\n")
    for i in range(prog.num_rows):
        w(f"{i} {_num(prog.bl[i])} {_num(prog.bu[i])}\n")
    w(f"A {A.nnz}\n")
    for k in order:
        w(f"{A.row[k]} {A.col[k]} {_num(A.data[k])}\n")
    w("END\n")
    return out.getvalue()


def import_program(text: str) -> StandardConicProgram:
    """Inverse of :func:`export_program`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    pos = 0

    def header(key):
        nonlocal pos
        if pos >= len(lines):
            raise ProgramFormatError(f"missing section {key}")
        parts = lines[pos].split()
        if parts[0] != key:
            raise ProgramFormatError(f"line {pos + 1}: expected {key}, got {parts[0]!r}")
        pos += 1
        return parts[1:]

    def body(count):
        nonlocal pos
        if pos + count > len(lines):
            raise ProgramFormatError("truncated section")
        rows = [lines[pos + k].split() for k in range(count)]
        pos += count
        return rows

    try:
        sense = header("SENSE")[0]
        offset = float(header("OFFSET")[0])
        n = int(header("VARS")[0])
        header("BOUNDS")
        b = np.array([[float(v) for v in r[1:3]] for r in body(n)]).reshape(n, 2)
        nc = int(header("CONES")[0])
        cones = []
        for kind, start, dim in body(nc):
            if kind not in CONE_KINDS:
                raise ProgramFormatError(f"unknown cone kind {kind!r}")
            if kind != "FREE":
                cones.append((CONE_KINDS.index(kind), int(start), int(dim)))
        no = int(header("OBJ")[0])
        c = np.zeros(n)
        for i, v in body(no):
            c[int(i)] = float(v)
        m = int(header("ROWS")[0])
        rb = np.array([[float(v) for v in r[1:3]] for r in body(m)]).reshape(m, 2)
        nnz = int(header("A")[0])
        trip = body(nnz)
        ri = np.array([int(t[0]) for t in trip], dtype=np.int64)
        ci = np.array([int(t[1]) for t in trip], dtype=np.int64)
        vv = np.array([float(t[2]) for t in trip])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ProgramFormatError):
            raise
        raise ProgramFormatError(f"malformed program text near line {pos + 1}: {exc}") from None
    A = sp.csr_matrix((vv, (ri, ci)), shape=(m, n))
    cones_arr = np.array(cones, dtype=np.int64).reshape(-1, 3)
    return StandardConicProgram(c, A, rb[:, 0], rb[:, 1], b[:, 0], b[:, 1], cones_arr, offset, sense).check()


def programs_equal(p: StandardConicProgram, q: StandardConicProgram) -> bool:
    same = (p.num_vars == q.num_vars and p.num_rows == q.num_rows and p.sense == q.sense
            and p.obj_offset == q.obj_offset)
    if not same:
        return False
    arrs = [(p.c, q.c), (p.bl, q.bl), (p.bu, q.bu), (p.lx, q.lx), (p.ux, q.ux)]
    if not all(np.array_equal(a, b) for a, b in arrs):
        return False
    def cones(prog):
        arr = np.asarray(prog.cones).reshape(-1, 3)
        return arr[np.argsort(arr[:, 1], kind="stable")]
    if not np.array_equal(cones(p), cones(q)):
        return False
    return (p.A != q.A).nnz == 0
