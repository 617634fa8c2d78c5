"""Triangle mesh (PLY) and landmark (CSV/JSON) storage.

Only ``ascii 1.0`` and ``binary_little_endian 1.0`` PLY files are handled.
All coordinates are promoted to float64 on read; the writer stores doubles
so a binary round trip is bit-exact and an ascii round trip uses 17
significant digits (also exact).
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateName,
    IndexOutOfRange,
    InvalidMesh,
    IoFailure,
    LandmarkError,
    MalformedHeader,
    NonNumericCoordinate,
    PlyError,
    TooFewLandmarks,
    TruncatedPayload,
    UnsupportedFormat,
)

__all__ = [
    "TriangleMesh",
    "LandmarkSet",
    "ValidationReport",
    "read_ply",
    "write_ply",
    "read_landmarks",
    "write_landmarks",
    "validate_mesh",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle surface.

    ``vertices`` is (n, 3) float64 in millimetres and ``faces`` is (m, 3)
    int64.  Optional ``vertex_colors`` (n, 3) uint8 and ``vertex_normals``
    (n, 3) float64.  Arrays are copied and made read-only.

    Construction only checks array shapes; content problems (NaN, bad
    indices) are reported by :func:`validate_mesh` so that broken meshes can
    still be inspected.
    """

    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), np.int64))
    vertex_colors: np.ndarray | None = None
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3:
            if v.size == 0:
                v = v.reshape(0, 3)
            else:
                raise InvalidMesh(f"vertices must have shape (n, 3), got {v.shape}")
        f = np.asarray(self.faces)
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise InvalidMesh(f"faces must have shape (m, 3), got {f.shape}")
        if f.dtype.kind not in "iu":
            if not np.all(np.isfinite(f)) or np.any(f != np.round(f)):
                raise InvalidMesh("face indices must be integers")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f.astype(np.int64)))
        if self.vertex_colors is not None:
            c = np.asarray(self.vertex_colors)
            if c.ndim != 2 or c.shape[1] != 3:
                raise InvalidMesh(f"vertex_colors must have shape (n, 3), got {c.shape}")
            object.__setattr__(self, "vertex_colors", _frozen(c.astype(np.uint8)))
        if self.vertex_normals is not None:
            nrm = np.asarray(self.vertex_normals, dtype=np.float64)
            if nrm.ndim != 2 or nrm.shape[1] != 3:
                raise InvalidMesh(f"vertex_normals must have shape (n, 3), got {nrm.shape}")
            object.__setattr__(self, "vertex_normals", _frozen(nrm))

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)

    def replace(self, **changes) -> "TriangleMesh":
        kw = dict(
            vertices=self.vertices,
            faces=self.faces,
            vertex_colors=self.vertex_colors,
            vertex_normals=self.vertex_normals,
        )
        kw.update(changes)
        return TriangleMesh(**kw)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.faces, other.faces)
            and _opt_equal(self.vertex_colors, other.vertex_colors)
            and _opt_equal(self.vertex_normals, other.vertex_normals)
        )

    __hash__ = None


def _opt_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """Ordered, named 3D landmark configuration of one subject/method."""

    names: tuple[str, ...]
    points: np.ndarray
    subject_id: str = ""
    method_tag: str = ""

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        seen = set()
        for n in names:
            if n in seen:
                raise DuplicateName(f"duplicate landmark name {n!r}")
            seen.add(n)
        try:
            pts = np.asarray(self.points, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise NonNumericCoordinate(str(exc)) from None
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) != len(names):
            raise LandmarkError(
                f"points must have shape ({len(names)}, 3), got {pts.shape}"
            )
        if len(names) < 3:
            raise TooFewLandmarks(f"need at least 3 landmarks, got {len(names)}")
        if not np.all(np.isfinite(pts)):
            raise NonNumericCoordinate("landmark coordinates must be finite")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "method_tag", str(self.method_tag))

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def point(self, name: str) -> np.ndarray:
        return self.points[self.index(name)]

    def subset(self, names: Iterable[str]) -> "LandmarkSet":
        names = list(names)
        idx = [self.index(n) for n in names]
        return LandmarkSet(names, self.points[idx], self.subject_id, self.method_tag)

    def replace(self, **changes) -> "LandmarkSet":
        kw = dict(
            names=self.names,
            points=self.points,
            subject_id=self.subject_id,
            method_tag=self.method_tag,
        )
        kw.update(changes)
        return LandmarkSet(**kw)

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return (
            self.names == other.names
            and np.array_equal(self.points, other.points)
            and self.subject_id == other.subject_id
            and self.method_tag == other.method_tag
        )

    __hash__ = None


@dataclass
class ValidationReport:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def codes(self) -> set[str]:
        return {c for c, _ in self.errors} | {c for c, _ in self.warnings}


def validate_mesh(mesh: TriangleMesh) -> ValidationReport:
    """Check a mesh for structural problems.

    Errors: ``non_finite``, ``index_out_of_range``, ``color_length``,
    ``normal_length``.  Warnings: ``degenerate_face``, ``unreferenced_vertex``.
    """
    rep = ValidationReport()
    v, f = mesh.vertices, mesh.faces
    n = len(v)

    bad = ~np.all(np.isfinite(v), axis=1)
    if bad.any():
        rep.errors.append(
            ("non_finite", f"{int(bad.sum())} vertices have NaN/inf coordinates "
                           f"(first: {int(np.argmax(bad))})")
        )
    oob = np.any((f < 0) | (f >= n), axis=1)
    if oob.any():
        rep.errors.append(
            ("index_out_of_range", f"{int(oob.sum())} faces reference vertices outside [0, {n})")
        )
    if mesh.vertex_colors is not None and len(mesh.vertex_colors) != n:
        rep.errors.append(
            ("color_length", f"{len(mesh.vertex_colors)} colors for {n} vertices")
        )
    if mesh.vertex_normals is not None and len(mesh.vertex_normals) != n:
        rep.errors.append(
            ("normal_length", f"{len(mesh.vertex_normals)} normals for {n} vertices")
        )

    good = f[~oob]
    if len(good):
        repeated = (good[:, 0] == good[:, 1]) | (good[:, 1] == good[:, 2]) | (good[:, 0] == good[:, 2])
        tri = v[good]
        with np.errstate(over="ignore", invalid="ignore"):
            cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
            area2 = np.sqrt(np.sum(cross * cross, axis=1))
        degenerate = repeated | (area2 == 0.0)
        if degenerate.any():
            rep.warnings.append(
                ("degenerate_face", f"{int(degenerate.sum())} zero-area faces")
            )
    referenced = np.zeros(n, dtype=bool)
    referenced[good.ravel()] = True
    if n and not referenced.all():
        rep.warnings.append(
            ("unreferenced_vertex", f"{int((~referenced).sum())} vertices not used by any face")
        )
    return rep


# --------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: str | None = None  # set for list properties


@dataclass
class _Element:
    name: str
    count: int
    properties: list[_Property] = field(default_factory=list)


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise MalformedHeader("missing 'ply' magic")
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeader("no end_header line")
    nl = data.find(b"\n", end)
    if nl < 0:
        # header without trailing newline is only acceptable for empty bodies
        nl = len(data) - 1
    if data[end + len(b"end_header"):nl].strip(b"\r \t"):
        raise MalformedHeader("garbage after end_header")
    try:
        text = data[:end].decode("ascii")
    except UnicodeDecodeError:
        raise MalformedHeader("header is not ASCII") from None

    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != "ply":
        raise MalformedHeader("first header line must be 'ply'")
    fmt = None
    elements: list[_Element] = []
    for ln in lines[1:]:
        if not ln or ln.startswith(("comment", "obj_info")):
            continue
        tok = ln.split()
        kw = tok[0]
        if kw == "format":
            if len(tok) != 3:
                raise MalformedHeader(f"bad format line {ln!r}")
            if tok[1] == "binary_big_endian":
                raise UnsupportedFormat("big-endian PLY is not supported")
            if tok[1] not in ("ascii", "binary_little_endian"):
                raise MalformedHeader(f"unknown PLY format {tok[1]!r}")
            if tok[2] != "1.0":
                raise UnsupportedFormat(f"PLY version {tok[2]!r} not supported")
            fmt = tok[1]
        elif kw == "element":
            if len(tok) != 3:
                raise MalformedHeader(f"bad element line {ln!r}")
            try:
                count = int(tok[2])
            except ValueError:
                raise MalformedHeader(f"bad element count in {ln!r}") from None
            if count < 0:
                raise MalformedHeader(f"negative element count in {ln!r}")
            elements.append(_Element(tok[1], count))
        elif kw == "property":
            if not elements:
                raise MalformedHeader("property before any element")
            if len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1].properties.append(_Property(tok[2], _PLY_TYPES[tok[1]]))
            elif (len(tok) == 5 and tok[1] == "list"
                  and tok[2] in _PLY_TYPES and tok[3] in _PLY_TYPES):
                if _PLY_TYPES[tok[2]][0] == "f":
                    raise MalformedHeader(f"list count type must be integral: {ln!r}")
                elements[-1].properties.append(
                    _Property(tok[4], _PLY_TYPES[tok[3]], _PLY_TYPES[tok[2]])
                )
            else:
                raise MalformedHeader(f"bad property line {ln!r}")
        else:
            raise MalformedHeader(f"unknown header keyword {kw!r}")
    if fmt is None:
        raise MalformedHeader("missing format line")
    for el in elements:
        if el.count and not el.properties:
            raise MalformedHeader(f"element {el.name!r} has no properties")
    names = [e.name for e in elements]
    if "vertex" not in names:
        raise MalformedHeader("no vertex element")
    if len(set(names)) != len(names):
        raise MalformedHeader("duplicate element names")
    vprops = {p.name: p for p in elements[names.index("vertex")].properties}
    for axis in "xyz":
        p = vprops.get(axis)
        if p is None or p.count_dtype is not None:
            raise MalformedHeader(f"vertex element lacks scalar property {axis!r}")
    return fmt, elements, nl + 1


def _read_binary_element(buf: memoryview, pos: int, el: _Element):
    """Return ({prop: array or list of arrays}, new_pos)."""
    props = el.properties
    if all(p.count_dtype is None for p in props):
        dt = np.dtype([(f"f{i}", "<" + p.dtype) for i, p in enumerate(props)])
        need = dt.itemsize * el.count
        if pos + need > len(buf):
            raise TruncatedPayload(f"element {el.name!r} needs {need} bytes")
        arr = np.frombuffer(buf, dtype=dt, count=el.count, offset=pos)
        return {p.name: arr[f"f{i}"] for i, p in enumerate(props)}, pos + need

    # fast path: every list has exactly three items
    fields = []
    for i, p in enumerate(props):
        if p.count_dtype is None:
            fields.append((f"f{i}", "<" + p.dtype))
        else:
            fields.append((f"c{i}", "<" + p.count_dtype))
            fields.append((f"f{i}", "<" + p.dtype, (3,)))
    dt = np.dtype(fields)
    need = dt.itemsize * el.count
    if pos + need <= len(buf):
        arr = np.frombuffer(buf, dtype=dt, count=el.count, offset=pos)
        if all(np.all(arr[f"c{i}"] == 3) for i, p in enumerate(props) if p.count_dtype):
            return {p.name: arr[f"f{i}"] for i, p in enumerate(props)}, pos + need

    # general path, row by row
    out: dict[str, list] = {p.name: [] for p in props}
    for _ in range(el.count):
        for p in props:
            if p.count_dtype is None:
                size = np.dtype(p.dtype).itemsize
                if pos + size > len(buf):
                    raise TruncatedPayload(f"element {el.name!r} truncated")
                out[p.name].append(np.frombuffer(buf, "<" + p.dtype, 1, pos)[0])
                pos += size
            else:
                csize = np.dtype(p.count_dtype).itemsize
                if pos + csize > len(buf):
                    raise TruncatedPayload(f"element {el.name!r} truncated")
                k = int(np.frombuffer(buf, "<" + p.count_dtype, 1, pos)[0])
                pos += csize
                if k < 0:
                    raise PlyError(f"negative list length in {el.name!r}")
                isize = np.dtype(p.dtype).itemsize
                if pos + k * isize > len(buf):
                    raise TruncatedPayload(f"element {el.name!r} truncated")
                out[p.name].append(np.frombuffer(buf, "<" + p.dtype, k, pos).copy())
                pos += k * isize
    return out, pos


def _to_number_array(tokens, dtype) -> np.ndarray:
    try:
        vals = np.array(tokens, dtype=np.float64)
    except ValueError:
        raise PlyError("non-numeric value in ascii payload") from None
    if dtype[0] != "f":
        if not np.all(np.isfinite(vals)) or np.any(vals != np.round(vals)):
            raise PlyError("non-integer value for integral property")
    return vals


def _read_ascii_element(tokens: list, pos: int, el: _Element):
    props = el.properties
    n = el.count
    if all(p.count_dtype is None for p in props):
        k = len(props)
        if pos + n * k > len(tokens):
            raise TruncatedPayload(f"element {el.name!r} truncated")
        vals = _to_number_array(tokens[pos:pos + n * k], "f").reshape(n, k)
        for j, p in enumerate(props):
            _to_number_array(vals[:, j], p.dtype)
        return {p.name: vals[:, j] for j, p in enumerate(props)}, pos + n * k

    # fast path: every list has exactly three items
    width = sum(1 if p.count_dtype is None else 4 for p in props)
    if pos + n * width <= len(tokens):
        try:
            vals = np.array(tokens[pos:pos + n * width], dtype=np.float64).reshape(n, width)
        except ValueError:
            vals = None
        if vals is not None:
            out, col, ok = {}, 0, True
            for p in props:
                if p.count_dtype is None:
                    out[p.name] = vals[:, col]
                    col += 1
                else:
                    if not np.all(vals[:, col] == 3):
                        ok = False
                        break
                    out[p.name] = vals[:, col + 1:col + 4]
                    col += 4
            if ok:
                for p in props:
                    _to_number_array(np.ravel(out[p.name]), p.dtype)
                return out, pos + n * width

    out = {p.name: [] for p in props}
    for _ in range(n):
        for p in props:
            if p.count_dtype is None:
                if pos >= len(tokens):
                    raise TruncatedPayload(f"element {el.name!r} truncated")
                out[p.name].append(_to_number_array([tokens[pos]], p.dtype)[0])
                pos += 1
            else:
                if pos >= len(tokens):
                    raise TruncatedPayload(f"element {el.name!r} truncated")
                k = _to_number_array([tokens[pos]], p.count_dtype)[0]
                if k < 0:
                    raise PlyError(f"negative list length in {el.name!r}")
                k = int(k)
                pos += 1
                if pos + k > len(tokens):
                    raise TruncatedPayload(f"element {el.name!r} truncated")
                out[p.name].append(_to_number_array(tokens[pos:pos + k], p.dtype))
                pos += k
    return out, pos


def _faces_from(values) -> np.ndarray:
    if isinstance(values, list):
        if any(len(row) != 3 for row in values):
            raise UnsupportedFormat("only triangular faces are supported")
        if not values:
            return np.zeros((0, 3), np.int64)
        values = np.stack(values)
    return np.asarray(values).reshape(-1, 3).astype(np.int64)


def parse_ply(data: bytes) -> TriangleMesh:
    """Parse PLY bytes.  Any malformed input raises a :class:`PlyError`."""
    fmt, elements, body_start = _parse_header(data)
    parsed = {}
    if fmt == "binary_little_endian":
        buf = memoryview(data)
        pos = body_start
        for el in elements:
            parsed[el.name], pos = _read_binary_element(buf, pos, el)
    else:
        try:
            tokens = data[body_start:].decode("ascii").split()
        except UnicodeDecodeError:
            raise PlyError("non-ASCII bytes in ascii payload") from None
        pos = 0
        for el in elements:
            parsed[el.name], pos = _read_ascii_element(tokens, pos, el)

    vert = parsed["vertex"]
    vertices = np.column_stack([np.asarray(vert[a], dtype=np.float64) for a in "xyz"]) \
        if len(vert["x"]) else np.zeros((0, 3))
    if not np.all(np.isfinite(vertices)):
        raise PlyError("non-finite vertex coordinate")

    colors = None
    if all(c in vert for c in ("red", "green", "blue")):
        cols = np.column_stack([np.asarray(vert[c], dtype=np.float64) for c in ("red", "green", "blue")]) \
            if len(vertices) else np.zeros((0, 3))
        if cols.size and np.all(cols <= 1.0) and not np.all(np.round(cols) == cols):
            cols = np.round(cols * 255.0)
        if cols.size and (np.any(cols < 0) or np.any(cols > 255) or not np.all(np.isfinite(cols))):
            raise PlyError("vertex colors outside 0..255")
        colors = cols.astype(np.uint8)
    normals = None
    if all(c in vert for c in ("nx", "ny", "nz")):
        normals = np.column_stack([np.asarray(vert[c], dtype=np.float64) for c in ("nx", "ny", "nz")]) \
            if len(vertices) else np.zeros((0, 3))

    faces = np.zeros((0, 3), np.int64)
    if "face" in parsed:
        fprops = parsed["face"]
        key = next((k for k in ("vertex_indices", "vertex_index") if k in fprops), None)
        if key is None:
            raise MalformedHeader("face element lacks vertex_indices list")
        faces = _faces_from(fprops[key])
    if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
        bad = int(faces.max()) if faces.max() >= len(vertices) else int(faces.min())
        raise IndexOutOfRange(f"face references vertex {bad} of {len(vertices)}")
    return TriangleMesh(vertices, faces, colors, normals)


def read_ply(path) -> TriangleMesh:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return parse_ply(data)


def ply_bytes(mesh: TriangleMesh, format: str = "binary_little_endian") -> bytes:
    if format not in ("ascii", "binary_little_endian"):
        raise UnsupportedFormat(f"cannot write PLY format {format!r}")
    report = validate_mesh(mesh)
    if not report.ok:
        raise InvalidMesh("; ".join(m for _, m in report.errors))
    n, m = mesh.vertex_count, mesh.face_count
    header = ["ply", f"format {format} 1.0", "comment written by facemorph",
              f"element vertex {n}",
              "property double x", "property double y", "property double z"]
    if mesh.vertex_normals is not None:
        header += ["property double nx", "property double ny", "property double nz"]
    if mesh.vertex_colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [f"element face {m}", "property list uchar int vertex_indices", "end_header"]
    head = ("\n".join(header) + "\n").encode("ascii")

    vfields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    if mesh.vertex_normals is not None:
        vfields += [("nx", "<f8"), ("ny", "<f8"), ("nz", "<f8")]
    if mesh.vertex_colors is not None:
        vfields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    vrec = np.empty(n, dtype=np.dtype(vfields))
    for j, a in enumerate("xyz"):
        vrec[a] = mesh.vertices[:, j]
    if mesh.vertex_normals is not None:
        for j, a in enumerate(("nx", "ny", "nz")):
            vrec[a] = mesh.vertex_normals[:, j]
    if mesh.vertex_colors is not None:
        for j, a in enumerate(("red", "green", "blue")):
            vrec[a] = mesh.vertex_colors[:, j]

    if format == "binary_little_endian":
        frec = np.empty(m, dtype=np.dtype([("n", "u1"), ("v", "<i4", (3,))]))
        frec["n"] = 3
        frec["v"] = mesh.faces
        return head + vrec.tobytes() + frec.tobytes()

    out = io.StringIO()
    for row in vrec.tolist():
        out.write(" ".join(repr(float(x)) if isinstance(x, float) else str(x) for x in row))
        out.write("\n")
    for a, b, c in mesh.faces.tolist():
        out.write(f"3 {a} {b} {c}\n")
    return head + out.getvalue().encode("ascii")


def write_ply(mesh: TriangleMesh, path, format: str = "binary_little_endian") -> None:
    data = ply_bytes(mesh, format)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# --------------------------------------------------------------------------
# landmarks

def _coord(value, name: str) -> float:
    if isinstance(value, bool):
        raise NonNumericCoordinate(f"landmark {name!r}: boolean coordinate")
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise NonNumericCoordinate(f"landmark {name!r}: {value!r} is not a number") from None
    if not math.isfinite(x):
        raise NonNumericCoordinate(f"landmark {name!r}: non-finite coordinate")
    return x


def _check_unique(names: Sequence[str]) -> None:
    seen = set()
    for n in names:
        if n in seen:
            raise DuplicateName(f"duplicate landmark name {n!r}")
        seen.add(n)


def parse_landmarks_csv(text: str, subject_id: str = "", method_tag: str = "") -> LandmarkSet:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise LandmarkError("empty landmark file")
    header = [c.strip().lower() for c in rows[0]]
    if header != ["name", "x", "y", "z"]:
        raise LandmarkError(f"CSV header must be name,x,y,z, got {rows[0]}")
    names, pts = [], []
    for r in rows[1:]:
        if len(r) != 4:
            raise LandmarkError(f"row {r} does not have 4 columns")
        name = r[0].strip()
        names.append(name)
        pts.append([_coord(c.strip(), name) for c in r[1:]])
    _check_unique(names)
    if len(names) < 3:
        raise TooFewLandmarks(f"need at least 3 landmarks, got {len(names)}")
    return LandmarkSet(names, np.array(pts), subject_id, method_tag)


def parse_landmarks_json(text: str) -> LandmarkSet:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LandmarkError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("landmarks"), list):
        raise LandmarkError("JSON landmarks must be an object with a 'landmarks' list")
    names, pts = [], []
    for item in doc["landmarks"]:
        if not isinstance(item, dict) or not {"name", "x", "y", "z"} <= item.keys():
            raise LandmarkError(f"landmark entry {item!r} lacks name/x/y/z")
        name = str(item["name"])
        names.append(name)
        pts.append([_coord(item[a], name) for a in "xyz"])
    _check_unique(names)
    if len(names) < 3:
        raise TooFewLandmarks(f"need at least 3 landmarks, got {len(names)}")
    return LandmarkSet(
        names, np.array(pts),
        str(doc.get("subject_id", "")), str(doc.get("method_tag", "")),
    )


def read_landmarks(path, subject_id: str | None = None, method_tag: str | None = None) -> LandmarkSet:
    """Read a landmark CSV (``name,x,y,z``) or JSON file.

    CSV files carry no metadata: ``subject_id`` defaults to the file stem and
    ``method_tag`` to ``""`` unless given.  For JSON the arguments, when
    given, override the stored values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        ls = parse_landmarks_json(text)
    else:
        ls = parse_landmarks_csv(text, path.stem, "")
    if subject_id is not None:
        ls = ls.replace(subject_id=subject_id)
    if method_tag is not None:
        ls = ls.replace(method_tag=method_tag)
    return ls


def write_landmarks(lms: LandmarkSet, path, format: str | None = None) -> None:
    """Write landmarks as CSV or JSON (inferred from the suffix by default).

    CSV drops ``subject_id``/``method_tag``; a warning is issued when they
    are non-empty.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "csv":
        if lms.subject_id or lms.method_tag:
            warnings.warn("CSV landmark format drops subject_id/method_tag", UserWarning,
                          stacklevel=2)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "x", "y", "z"])
        for name, p in zip(lms.names, lms.points.tolist()):
            w.writerow([name] + [repr(float(c)) for c in p])
        text = buf.getvalue()
    elif format == "json":
        doc = {
            "subject_id": lms.subject_id,
            "method_tag": lms.method_tag,
            "landmarks": [
                {"name": n, "x": p[0], "y": p[1], "z": p[2]}
                for n, p in zip(lms.names, lms.points.tolist())
            ],
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        raise ValueError(f"unknown landmark format {format!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
