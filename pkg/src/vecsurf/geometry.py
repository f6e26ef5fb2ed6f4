"""Triangle meshes, exact closest-point queries, ray casting, surface sampling.

The spatial index is a flat BVH over triangles (built once, immutable, safe to
query from many threads). Closest-point results are exact up to floating point:
the per-triangle routine is the standard region-based case analysis, and the
tree traversal prunes only nodes that provably cannot beat the current best, so
accelerated queries match a brute-force scan over all triangles.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit, prange
log = logging.getLogger(__name__)

_LEAF_SIZE = 8
_STACK_DEPTH = 128


@dataclass
class TriMesh:
    """Indexed triangle surface.

    vertices: (n, 3) float64 positions, model units (normalized shapes live in
        [-1, 1]^3). triangles: (m, 3) int64 vertex indices. The mesh may be
        open, non-watertight, or non-orientable.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        self.triangles = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (n, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must be (m, 3)")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-triangle corner positions as three (m, 3) arrays."""
        v, t = self.vertices, self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def triangle_normals(self) -> np.ndarray:
        """Unit normals; zero vector for degenerate triangles."""
        a, b, c = self.triangle_corners()
        n = np.cross(b - a, c - a)
        norms = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norms, out=np.zeros_like(n), where=norms > 0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise ValueError("no surface")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def drop_degenerate(self, min_area: float = 1e-12) -> "TriMesh":
        """Remove triangles with area <= min_area (load-time cleanup)."""
        areas = self.triangle_areas()
        keep = areas > min_area
        dropped = int((~keep).sum())
        if dropped:
            log.warning("dropping %d degenerate triangle(s)", dropped)
            return TriMesh(self.vertices, self.triangles[keep])
        return self

    def is_watertight(self) -> bool:
        """True when every edge borders exactly two triangles."""
        if not len(self.triangles):
            return False
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        keys = edges[:, 0] * len(self.vertices) + edges[:, 1]
        _, counts = np.unique(keys, return_counts=True)
        return bool(np.all(counts == 2))

    def boundary_edge_count(self) -> int:
        """Number of edges bordering != 2 triangles (0 for closed surfaces)."""
        if not len(self.triangles):
            return 0
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        keys = edges[:, 0] * len(self.vertices) + edges[:, 1]
        _, counts = np.unique(keys, return_counts=True)
        return int((counts != 2).sum())


@dataclass(frozen=True)
class MeshTransform:
    """Similarity transform recorded by normalize_mesh: y = (x - center) * scale."""

    center: np.ndarray
    scale: float

    def to_normalized(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def to_original(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center


def normalize_mesh(mesh: TriMesh, margin: float = 0.05) -> tuple[TriMesh, MeshTransform]:
    """Scale/translate a mesh to fit [-1, 1]^3 with the given margin.

    Returns the normalized mesh and the transform that maps original
    coordinates to normalized ones (so outputs can be mapped back).
    """
    lo, hi = mesh.bounds()
    center = 0.5 * (lo + hi)
    half = float(np.max(hi - lo)) * 0.5
    if half <= 0:
        raise ValueError("mesh has zero extent")
    scale = (1.0 - margin) / half
    tf = MeshTransform(center=center, scale=scale)
    return TriMesh(tf.to_normalized(mesh.vertices), mesh.triangles), tf


@dataclass(frozen=True)
class ClosestPointResult:
    """Nearest surface point for one query.

    displacement points from the query toward the surface
    (point - query), so distance == ||displacement||.
    """

    point: np.ndarray
    distance: float
    triangle_id: int
    displacement: np.ndarray


@njit(cache=True, inline="always")
def _closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on triangle abc to point p (region case analysis)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az

    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az

    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz

    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        return ax + t * abx, ay + t * aby, az + t * abz

    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz

    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        return ax + t * acx, ay + t * acy, az + t * acz

    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + t * (cx - bx), by + t * (cy - by), bz + t * (cz - bz)

    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        ax + abx * v + acx * w,
        ay + aby * v + acy * w,
        az + abz * v + acz * w,
    )


@njit(cache=True, inline="always")
def _bbox_dist_sq(px, py, pz, lox, loy, loz, hix, hiy, hiz):
    d = 0.0
    if px < lox:
        d += (lox - px) ** 2
    elif px > hix:
        d += (px - hix) ** 2
    if py < loy:
        d += (loy - py) ** 2
    elif py > hiy:
        d += (py - hiy) ** 2
    if pz < loz:
        d += (loz - pz) ** 2
    elif pz > hiz:
        d += (pz - hiz) ** 2
    return d


@njit(cache=True, parallel=True, fastmath=True)
def _closest_points_kernel(
    points, ta, tb, tc, order, bb_lo, bb_hi, left, right, start, count,
    out_point, out_d2, out_tri,
):
    # ta/tb/tc are pre-sorted in leaf order; `order` maps rows back to ids.
    # Each point seeds its bound from the previous answer in the chunk (free
    # and tight for spatially coherent batches); the traversal prunes only
    # nodes strictly worse than the bound, so ties still resolve to the
    # lowest triangle id and the answer never depends on the seed.
    n = points.shape[0]
    chunk = 2048
    n_chunks = (n + chunk - 1) // chunk
    for ci in prange(n_chunks):
        stack_node = np.empty(_STACK_DEPTH, dtype=np.int64)
        stack_dist = np.empty(_STACK_DEPTH, dtype=np.float64)
        prev = -1
        for i in range(ci * chunk, min((ci + 1) * chunk, n)):
            px, py, pz = points[i, 0], points[i, 1], points[i, 2]
            best_d2 = 1e300
            best_tri = -1
            bqx = bqy = bqz = 0.0
            if prev >= 0:
                qx, qy, qz = _closest_on_triangle(
                    px, py, pz,
                    ta[prev, 0], ta[prev, 1], ta[prev, 2],
                    tb[prev, 0], tb[prev, 1], tb[prev, 2],
                    tc[prev, 0], tc[prev, 1], tc[prev, 2],
                )
                best_d2 = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
                best_tri = order[prev]
                bqx, bqy, bqz = qx, qy, qz
            best_row = prev
            top = 0
            stack_node[top] = 0
            stack_dist[top] = 0.0
            top += 1
            while top > 0:
                top -= 1
                if stack_dist[top] > best_d2:
                    continue
                node = stack_node[top]
                cnt = count[node]
                if cnt > 0:
                    s0 = start[node]
                    for k in range(s0, s0 + cnt):
                        qx, qy, qz = _closest_on_triangle(
                            px, py, pz,
                            ta[k, 0], ta[k, 1], ta[k, 2],
                            tb[k, 0], tb[k, 1], tb[k, 2],
                            tc[k, 0], tc[k, 1], tc[k, 2],
                        )
                        d2 = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
                        if d2 < best_d2:
                            best_d2 = d2
                            best_tri = order[k]
                            best_row = k
                            bqx, bqy, bqz = qx, qy, qz
                        elif d2 == best_d2:
                            tri = order[k]
                            if tri < best_tri:
                                best_tri = tri
                                best_row = k
                                bqx, bqy, bqz = qx, qy, qz
                else:
                    l = left[node]
                    r = right[node]
                    dl = _bbox_dist_sq(
                        px, py, pz,
                        bb_lo[l, 0], bb_lo[l, 1], bb_lo[l, 2],
                        bb_hi[l, 0], bb_hi[l, 1], bb_hi[l, 2],
                    )
                    dr = _bbox_dist_sq(
                        px, py, pz,
                        bb_lo[r, 0], bb_lo[r, 1], bb_lo[r, 2],
                        bb_hi[r, 0], bb_hi[r, 1], bb_hi[r, 2],
                    )
                    if dl <= dr:
                        if dr <= best_d2:
                            stack_node[top] = r
                            stack_dist[top] = dr
                            top += 1
                        if dl <= best_d2:
                            stack_node[top] = l
                            stack_dist[top] = dl
                            top += 1
                    else:
                        if dl <= best_d2:
                            stack_node[top] = l
                            stack_dist[top] = dl
                            top += 1
                        if dr <= best_d2:
                            stack_node[top] = r
                            stack_dist[top] = dr
                            top += 1
            out_point[i, 0] = bqx
            out_point[i, 1] = bqy
            out_point[i, 2] = bqz
            out_d2[i] = best_d2
            out_tri[i] = best_tri
            prev = best_row


@njit(cache=True, inline="always")
def _ray_triangle_t(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Moller-Trumbore; returns hit parameter t or -1.0."""
    e1x, e1y, e1z = bx - ax, by - ay, bz - az
    e2x, e2y, e2z = cx - ax, cy - ay, cz - az
    hx = dy * e2z - dz * e2y
    hy = dz * e2x - dx * e2z
    hz = dx * e2y - dy * e2x
    det = e1x * hx + e1y * hy + e1z * hz
    if -1e-13 < det < 1e-13:
        return -1.0
    inv = 1.0 / det
    sx, sy, sz = ox - ax, oy - ay, oz - az
    u = (sx * hx + sy * hy + sz * hz) * inv
    if u < -1e-12 or u > 1.0 + 1e-12:
        return -1.0
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -1e-12 or u + v > 1.0 + 1e-12:
        return -1.0
    return (e2x * qx + e2y * qy + e2z * qz) * inv


@njit(cache=True, inline="always")
def _ray_hits_bbox(ox, oy, oz, invx, invy, invz, lo, hi, t_max):
    t0 = 0.0
    t1 = t_max
    tx1 = (lo[0] - ox) * invx
    tx2 = (hi[0] - ox) * invx
    if tx1 > tx2:
        tx1, tx2 = tx2, tx1
    t0 = max(t0, tx1)
    t1 = min(t1, tx2)
    ty1 = (lo[1] - oy) * invy
    ty2 = (hi[1] - oy) * invy
    if ty1 > ty2:
        ty1, ty2 = ty2, ty1
    t0 = max(t0, ty1)
    t1 = min(t1, ty2)
    tz1 = (lo[2] - oz) * invz
    tz2 = (hi[2] - oz) * invz
    if tz1 > tz2:
        tz1, tz2 = tz2, tz1
    t0 = max(t0, tz1)
    t1 = min(t1, tz2)
    return t0 <= t1


@njit(cache=True, parallel=True)
def _segment_blocked_kernel(
    camera, targets, eps_abs, ta, tb, tc, bb_lo, bb_hi, left, right, start, count,
    out_blocked,
):
    ox, oy, oz = camera[0], camera[1], camera[2]
    n = targets.shape[0]
    chunk = 512
    n_chunks = (n + chunk - 1) // chunk
    for ci in prange(n_chunks):
        stack = np.empty(_STACK_DEPTH, dtype=np.int64)
        for i in range(ci * chunk, min((ci + 1) * chunk, n)):
            dx = targets[i, 0] - ox
            dy = targets[i, 1] - oy
            dz = targets[i, 2] - oz
            seg = np.sqrt(dx * dx + dy * dy + dz * dz)
            if seg <= eps_abs:
                out_blocked[i] = False
                continue
            t_hi = 1.0 - eps_abs / seg
            invx = 1.0 / dx if dx != 0.0 else np.inf
            invy = 1.0 / dy if dy != 0.0 else np.inf
            invz = 1.0 / dz if dz != 0.0 else np.inf
            top = 0
            stack[top] = 0
            top += 1
            blocked = False
            while top > 0 and not blocked:
                top -= 1
                node = stack[top]
                if not _ray_hits_bbox(ox, oy, oz, invx, invy, invz, bb_lo[node], bb_hi[node], t_hi):
                    continue
                if count[node] > 0:
                    for k in range(start[node], start[node] + count[node]):
                        t = _ray_triangle_t(
                            ox, oy, oz, dx, dy, dz,
                            ta[k, 0], ta[k, 1], ta[k, 2],
                            tb[k, 0], tb[k, 1], tb[k, 2],
                            tc[k, 0], tc[k, 1], tc[k, 2],
                        )
                        if 1e-9 < t < t_hi:
                            blocked = True
                            break
                else:
                    stack[top] = left[node]
                    top += 1
                    stack[top] = right[node]
                    top += 1
            out_blocked[i] = blocked


def _morton_codes(centroids: np.ndarray) -> np.ndarray:
    lo = centroids.min(axis=0)
    span = centroids.max(axis=0) - lo
    span[span == 0] = 1.0
    q = np.clip(((centroids - lo) / span * 1023.0).astype(np.uint64), 0, 1023)

    def spread(x: np.ndarray) -> np.ndarray:
        x = (x | (x << 16)) & np.uint64(0x030000FF)
        x = (x | (x << 8)) & np.uint64(0x0300F00F)
        x = (x | (x << 4)) & np.uint64(0x030C30C3)
        x = (x | (x << 2)) & np.uint64(0x09249249)
        return x

    return spread(q[:, 0]) | (spread(q[:, 1]) << np.uint64(1)) | (spread(q[:, 2]) << np.uint64(2))


class SpatialIndex:
    """Immutable BVH over a mesh's triangles for closest-point and ray queries."""

    def __init__(self, mesh: TriMesh, leaf_size: int = _LEAF_SIZE):
        if mesh.n_triangles == 0:
            raise ValueError("no surface")
        self.mesh = mesh
        a, b, c = mesh.triangle_corners()
        self._normals = mesh.triangle_normals()
        self._watertight: bool | None = None
        self._vertex_pn: np.ndarray | None = None
        self._edge_keys: np.ndarray | None = None
        self._edge_pn: np.ndarray | None = None
        self._build(a, b, c, leaf_size)

    def _build(self, a: np.ndarray, b: np.ndarray, c: np.ndarray, leaf_size: int) -> None:
        m = self.mesh.n_triangles
        centroids = (a + b + c) / 3.0
        order = np.argsort(_morton_codes(centroids), kind="stable").astype(np.int64)
        # Triangle data lives in leaf order so leaf scans stay contiguous.
        self._ta = np.ascontiguousarray(a[order])
        self._tb = np.ascontiguousarray(b[order])
        self._tc = np.ascontiguousarray(c[order])
        tri_lo = np.minimum(np.minimum(self._ta, self._tb), self._tc)
        tri_hi = np.maximum(np.maximum(self._ta, self._tb), self._tc)

        max_nodes = 4 * (m // leaf_size + 2)
        bb_lo = np.empty((max_nodes, 3))
        bb_hi = np.empty((max_nodes, 3))
        left = np.full(max_nodes, -1, dtype=np.int64)
        right = np.full(max_nodes, -1, dtype=np.int64)
        start = np.zeros(max_nodes, dtype=np.int64)
        count = np.zeros(max_nodes, dtype=np.int64)

        n_nodes = 1
        stack = [(0, 0, m)]
        while stack:
            node, s, e = stack.pop()
            bb_lo[node] = tri_lo[s:e].min(axis=0)
            bb_hi[node] = tri_hi[s:e].max(axis=0)
            if e - s <= leaf_size:
                start[node] = s
                count[node] = e - s
                continue
            mid = (s + e) // 2
            l, r = n_nodes, n_nodes + 1
            n_nodes += 2
            left[node], right[node] = l, r
            stack.append((l, s, mid))
            stack.append((r, mid, e))

        self._order = order
        self._bb_lo = np.ascontiguousarray(bb_lo[:n_nodes])
        self._bb_hi = np.ascontiguousarray(bb_hi[:n_nodes])
        self._left = left[:n_nodes]
        self._right = right[:n_nodes]
        self._start = start[:n_nodes]
        self._count = count[:n_nodes]

    def is_watertight(self) -> bool:
        if self._watertight is None:
            self._watertight = self.mesh.is_watertight()
        return self._watertight

    def triangle_normal(self, triangle_id: int | np.ndarray) -> np.ndarray:
        return self._normals[triangle_id]

    def closest_points(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched closest-point query.

        Args:
            points: (n, 3) query positions.

        Returns:
            (surface points (n, 3), distances (n,), triangle ids (n,)).
            Ties are broken toward the lowest triangle id.
        """
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        n = pts.shape[0]
        out_point = np.empty((n, 3))
        out_d2 = np.empty(n)
        out_tri = np.empty(n, dtype=np.int64)
        _closest_points_kernel(
            pts, self._ta, self._tb, self._tc, self._order,
            self._bb_lo, self._bb_hi, self._left, self._right, self._start, self._count,
            out_point, out_d2, out_tri,
        )
        return out_point, np.sqrt(out_d2), out_tri

    def closest_point(self, query: np.ndarray) -> ClosestPointResult:
        """Single-query closest point on the surface."""
        q = np.asarray(query, dtype=np.float64).reshape(1, 3)
        point, dist, tri = self.closest_points(q)
        return ClosestPointResult(
            point=point[0],
            distance=float(dist[0]),
            triangle_id=int(tri[0]),
            displacement=point[0] - q[0],
        )

    def _ensure_pseudonormals(self) -> None:
        if self._vertex_pn is not None:
            return
        mesh = self.mesh
        tri = mesh.triangles
        fn = self._normals
        nv = mesh.n_vertices
        corners = mesh.triangle_corners()
        vpn = np.zeros((nv, 3))
        for i in range(3):
            p, q, r = corners[i], corners[(i + 1) % 3], corners[(i + 2) % 3]
            e1 = q - p
            e2 = r - p
            n1 = np.linalg.norm(e1, axis=1)
            n2 = np.linalg.norm(e2, axis=1)
            cos = np.einsum("ij,ij->i", e1, e2) / np.maximum(n1 * n2, 1e-300)
            angle = np.arccos(np.clip(cos, -1.0, 1.0))
            np.add.at(vpn, tri[:, i], angle[:, None] * fn)
        self._vertex_pn = vpn
        edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        keys = edges.min(axis=1) * np.int64(nv) + edges.max(axis=1)
        self._edge_keys, inv = np.unique(keys, return_inverse=True)
        epn = np.zeros((len(self._edge_keys), 3))
        np.add.at(epn, inv, np.tile(fn, (3, 1)))
        self._edge_pn = epn

    def inside_from_closest(
        self, points: np.ndarray, surface_points: np.ndarray, triangle_ids: np.ndarray
    ) -> np.ndarray:
        """Inside test reusing a prior closest_points result.

        The sign comes from the angle-weighted pseudonormal of the closest
        feature (face interior, edge, or vertex, classified by barycentric
        coordinates); exact for watertight, consistently wound meshes.
        Points exactly on the surface count as outside.
        """
        self._ensure_pseudonormals()
        mesh = self.mesh
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cp = np.atleast_2d(np.asarray(surface_points, dtype=np.float64))
        tids = np.atleast_1d(np.asarray(triangle_ids, dtype=np.int64))
        tri = mesh.triangles[tids]
        a = mesh.vertices[tri[:, 0]]
        b = mesh.vertices[tri[:, 1]]
        c = mesh.vertices[tri[:, 2]]
        v0 = b - a
        v1 = c - a
        v2 = cp - a
        d00 = np.einsum("ij,ij->i", v0, v0)
        d01 = np.einsum("ij,ij->i", v0, v1)
        d11 = np.einsum("ij,ij->i", v1, v1)
        d20 = np.einsum("ij,ij->i", v2, v0)
        d21 = np.einsum("ij,ij->i", v2, v1)
        denom = np.maximum(d00 * d11 - d01 * d01, 1e-300)
        v = (d11 * d20 - d01 * d21) / denom
        w = (d00 * d21 - d01 * d20) / denom
        u = 1.0 - v - w
        eps = 1e-9
        bary = np.column_stack([u, v, w])
        zeros = bary < eps
        nzero = zeros.sum(axis=1)
        pn = self._normals[tids].copy()
        on_vertex = nzero >= 2
        if on_vertex.any():
            corner = bary[on_vertex].argmax(axis=1)
            pn[on_vertex] = self._vertex_pn[tri[on_vertex, corner]]
        on_edge = nzero == 1
        if on_edge.any():
            # The zero coordinate's corner is the one NOT on the edge.
            zi = zeros[on_edge].argmax(axis=1)
            ends = np.stack([tri[on_edge, (zi + 1) % 3], tri[on_edge, (zi + 2) % 3]], axis=1)
            keys = ends.min(axis=1) * np.int64(mesh.n_vertices) + ends.max(axis=1)
            pn[on_edge] = self._edge_pn[np.searchsorted(self._edge_keys, keys)]
        return np.einsum("ij,ij->i", pts - cp, pn) < 0.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        """True for points strictly inside the surface.

        Raises:
            ValueError: if the mesh is not watertight (inside is undefined).
        """
        if not self.is_watertight():
            raise ValueError("inside test requires a watertight mesh")
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        cp, _, tids = self.closest_points(pts)
        return self.inside_from_closest(pts, cp, tids)

    def segments_blocked(self, camera: np.ndarray, targets: np.ndarray, eps: float = 1e-5) -> np.ndarray:
        """True where the open segment camera->target hits the mesh before the
        target (target end shrunk by eps in absolute units)."""
        cam = np.asarray(camera, dtype=np.float64).reshape(3)
        tgt = np.ascontiguousarray(np.atleast_2d(targets), dtype=np.float64)
        out = np.empty(len(tgt), dtype=np.bool_)
        _segment_blocked_kernel(
            cam, tgt, eps, self._ta, self._tb, self._tc,
            self._bb_lo, self._bb_hi, self._left, self._right, self._start, self._count,
            out,
        )
        return out


def closest_point_brute(mesh: TriMesh, query: np.ndarray) -> ClosestPointResult:
    """Brute-force closest point over every triangle (test oracle).

    Vectorized over all triangles; same tie rule as the index (lowest id).
    """
    q = np.asarray(query, dtype=np.float64).reshape(3)
    a, b, c = mesh.triangle_corners()
    ab = b - a
    ac = c - a
    ap = q - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = q - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = q - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    result = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    m = (d1 <= 0) & (d2 <= 0)
    result[m] = a[m]
    done |= m

    m = ~done & (d3 >= 0) & (d4 <= d3)
    result[m] = b[m]
    done |= m

    m = ~done & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    t = np.where(d1 - d3 != 0, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0)
    result[m] = a[m] + t[m, None] * ab[m]
    done |= m

    m = ~done & (d6 >= 0) & (d5 <= d6)
    result[m] = c[m]
    done |= m

    m = ~done & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    t = np.where(d2 - d6 != 0, d2 / np.where(d2 - d6 == 0, 1.0, d2 - d6), 0.0)
    result[m] = a[m] + t[m, None] * ac[m]
    done |= m

    m = ~done & (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    denom = (d4 - d3) + (d5 - d6)
    t = np.where(denom != 0, (d4 - d3) / np.where(denom == 0, 1.0, denom), 0.0)
    result[m] = b[m] + t[m, None] * (c[m] - b[m])
    done |= m

    m = ~done
    denom = va + vb + vc
    denom = np.where(denom == 0, 1.0, denom)
    v = vb / denom
    w = vc / denom
    result[m] = a[m] + v[m, None] * ab[m] + w[m, None] * ac[m]

    d2_all = np.einsum("ij,ij->i", result - q, result - q)
    best = int(np.lexsort((np.arange(len(a)), d2_all))[0])
    point = result[best]
    return ClosestPointResult(
        point=point,
        distance=float(np.sqrt(d2_all[best])),
        triangle_id=best,
        displacement=point - q,
    )


def sample_surface_points(mesh: TriMesh, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Area-uniform surface samples, deterministic per seed.

    Triangles are chosen with probability proportional to area and points are
    barycentric-uniform within each triangle.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mesh.n_triangles == 0:
        raise ValueError("no surface")
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("no surface")
    rng = np.random.default_rng(seed)
    tri = rng.choice(mesh.n_triangles, size=n, p=areas / total)
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    a, b, c = mesh.triangle_corners()
    return (1.0 - s)[:, None] * a[tri] + (s * (1.0 - r2))[:, None] * b[tri] + (s * r2)[:, None] * c[tri]
