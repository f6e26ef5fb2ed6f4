"""Mesh file I/O: OBJ (ASCII) read/write and binary little-endian PLY read.

Non-triangle faces are fan-triangulated at load. OBJ writes use repr-style
shortest round-trip floats so identical meshes serialize byte-identically.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import TriMesh


def load_mesh(path: str | Path, normalize_degenerate: bool = True) -> TriMesh:
    """Load an OBJ or PLY mesh; degenerate triangles are dropped."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        mesh = _read_obj(path)
    elif suffix == ".ply":
        mesh = _read_ply(path)
    else:
        raise ValueError(f"unsupported mesh format: {path.suffix!r}")
    if normalize_degenerate:
        mesh = mesh.drop_degenerate()
    return mesh


def _fan(indices: list[int]) -> list[tuple[int, int, int]]:
    return [(indices[0], indices[k], indices[k + 1]) for k in range(1, len(indices) - 1)]


def _read_obj(path: Path) -> TriMesh:
    vertices: list[tuple[float, float, float]] = []
    triangles: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError(f"malformed vertex line {lineno}")
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            elif tag == "f":
                if len(parts) < 4:
                    raise ValueError(f"malformed face line {lineno}")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise ValueError(f"malformed face line {lineno}") from exc
                    # OBJ is 1-based; negative indices count from the end.
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                triangles.extend(_fan(idx))
    if not vertices:
        raise ValueError(f"no vertices in {path}")
    return TriMesh(np.array(vertices), np.array(triangles, dtype=np.int64).reshape(-1, 3))


_PLY_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}


def _read_ply(path: Path) -> TriMesh:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise ValueError("not a PLY file")
        fmt = None
        elements: list[tuple[str, int, list]] = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError("unexpected end of PLY header")
            words = line.decode("ascii", errors="replace").strip().split()
            if not words:
                continue
            if words[0] == "format":
                fmt = words[1]
            elif words[0] == "element":
                elements.append((words[1], int(words[2]), []))
            elif words[0] == "property":
                if not elements:
                    raise ValueError("property before element in PLY header")
                if words[1] == "list":
                    elements[-1][2].append(("list", words[2], words[3], words[4]))
                else:
                    elements[-1][2].append(("scalar", words[1], words[2]))
            elif words[0] == "end_header":
                break
        if fmt != "binary_little_endian":
            raise ValueError(f"unsupported PLY format: {fmt!r} (binary little-endian only)")

        vertices = None
        faces: list[tuple[int, int, int]] = []
        for name, count, props in elements:
            if name == "vertex":
                fields = []
                offsets = {}
                pos = 0
                for p in props:
                    if p[0] != "scalar":
                        raise ValueError("list property on vertex element is unsupported")
                    code, size = _PLY_TYPES[p[1]]
                    offsets[p[2]] = (pos, code)
                    fields.append(size)
                    pos += size
                stride = pos
                raw = fh.read(stride * count)
                if len(raw) != stride * count:
                    raise ValueError("truncated PLY vertex data")
                vertices = np.empty((count, 3))
                for axis, key in enumerate(("x", "y", "z")):
                    if key not in offsets:
                        raise ValueError(f"PLY vertex element lacks {key}")
                    off, code = offsets[key]
                    vertices[:, axis] = [
                        struct.unpack_from("<" + code, raw, i * stride + off)[0]
                        for i in range(count)
                    ]
            elif name == "face":
                if len(props) != 1 or props[0][0] != "list":
                    raise ValueError("PLY face element must be a single list property")
                _, count_type, index_type, _ = props[0]
                ccode, csize = _PLY_TYPES[count_type]
                icode, isize = _PLY_TYPES[index_type]
                for _ in range(count):
                    raw = fh.read(csize)
                    if len(raw) != csize:
                        raise ValueError("truncated PLY face data")
                    k = struct.unpack("<" + ccode, raw)[0]
                    raw = fh.read(isize * k)
                    if len(raw) != isize * k:
                        raise ValueError("truncated PLY face data")
                    idx = list(struct.unpack(f"<{k}{icode}", raw))
                    faces.extend(_fan(idx))
            else:
                # Skip unknown fixed-stride elements.
                stride = 0
                for p in props:
                    if p[0] != "scalar":
                        raise ValueError(f"cannot skip list element {name!r}")
                    stride += _PLY_TYPES[p[1]][1]
                fh.seek(stride * count, 1)
    if vertices is None:
        raise ValueError("PLY file has no vertex element")
    return TriMesh(vertices, np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(path: str | Path, mesh: TriMesh, header_lines: list[str] | None = None) -> None:
    """Write a mesh as ASCII OBJ (1-based indices), deterministically."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {int(a) + 1} {int(b) + 1} {int(c) + 1}\n")
