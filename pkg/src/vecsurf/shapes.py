"""Procedural test shapes, all sized to sit comfortably inside [-1, 1]^3."""

from __future__ import annotations

import numpy as np

from .geometry import TriMesh


def icosphere(radius: float = 0.5, level: int = 4, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron projected onto a sphere. Watertight."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}
        new_faces = []

        def midpoint(i: int, j: int) -> int:
            key = (i, j) if i < j else (j, i)
            if key in cache:
                return cache[key]
            m = np.array(verts[i]) + np.array(verts[j])
            m /= np.linalg.norm(m)
            verts.append(tuple(m))
            cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab = midpoint(a, b)
            bc = midpoint(b, c)
            ca = midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.array(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.array(faces, dtype=np.int64))


def torus(
    major_radius: float = 0.5,
    minor_radius: float = 0.2,
    major_segments: int = 96,
    minor_segments: int = 48,
) -> TriMesh:
    """Ring torus around the z axis. Watertight."""
    u = np.arange(major_segments) * (2.0 * np.pi / major_segments)
    v = np.arange(minor_segments) * (2.0 * np.pi / minor_segments)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    r = major_radius + minor_radius * np.cos(vv)
    verts = np.stack([r * np.cos(uu), r * np.sin(uu), minor_radius * np.sin(vv)], axis=-1)
    verts = verts.reshape(-1, 3)

    faces = []
    for i in range(major_segments):
        for j in range(minor_segments):
            a = i * minor_segments + j
            b = ((i + 1) % major_segments) * minor_segments + j
            c = ((i + 1) % major_segments) * minor_segments + (j + 1) % minor_segments
            d = i * minor_segments + (j + 1) % minor_segments
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def box(half_extents=(0.5, 0.5, 0.5)) -> TriMesh:
    """Axis-aligned box, 12 triangles with outward winding. Watertight."""
    hx, hy, hz = (float(h) for h in np.broadcast_to(np.asarray(half_extents, dtype=np.float64), (3,)))
    v = np.array(
        [
            [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
            [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
        ]
    )
    f = np.array(
        [
            (0, 2, 1), (0, 3, 2),  # -z
            (4, 5, 6), (4, 6, 7),  # +z
            (0, 1, 5), (0, 5, 4),  # -y
            (2, 3, 7), (2, 7, 6),  # +y
            (1, 2, 6), (1, 6, 5),  # +x
            (3, 0, 4), (3, 4, 7),  # -x
        ],
        dtype=np.int64,
    )
    return TriMesh(v, f)


def open_square(half_extent: float = 0.5, z: float = 0.0) -> TriMesh:
    """Open square plate in the plane z=const (the open-surface test shape)."""
    h = float(half_extent)
    v = np.array([[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]])
    f = np.array([(0, 1, 2), (0, 2, 3)], dtype=np.int64)
    return TriMesh(v, f)


def plane_sheet(half_extent: float = 1.0, z: float = 0.0) -> TriMesh:
    """Plane z=const spanning the full domain cross-section."""
    return open_square(half_extent=half_extent, z=z)


def parallel_planes(separation: float = 1.0, half_extent: float = 1.0) -> TriMesh:
    """Two parallel sheets at z = +/- separation/2 (medial-axis test shape)."""
    top = plane_sheet(half_extent, z=+0.5 * separation)
    bottom = plane_sheet(half_extent, z=-0.5 * separation)
    verts = np.vstack([top.vertices, bottom.vertices])
    tris = np.vstack([top.triangles, bottom.triangles + len(top.vertices)])
    return TriMesh(verts, tris)


def two_spheres(radius: float = 0.25, offset: float = 0.5, level: int = 3) -> TriMesh:
    """Two disjoint spheres centered at x = +/- offset."""
    left = icosphere(radius, level, center=(-offset, 0.0, 0.0))
    right = icosphere(radius, level, center=(+offset, 0.0, 0.0))
    verts = np.vstack([left.vertices, right.vertices])
    tris = np.vstack([left.triangles, right.triangles + len(left.vertices)])
    return TriMesh(verts, tris)


_BUILDERS = {
    "sphere": icosphere,
    "torus": torus,
    "box": box,
    "disk": open_square,
    "plane": plane_sheet,
}


def make_shape(name: str) -> TriMesh:
    """Build a named procedural shape with its default parameters."""
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; known: {sorted(_BUILDERS)}") from None
