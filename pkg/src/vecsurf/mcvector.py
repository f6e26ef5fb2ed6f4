"""Marching cubes over vector fields, plus the classic scalar variant.

The vector pipeline turns a directional field into signed corner values and
then reuses the standard case tables: cell selection by discrete divergence,
two-cluster splitting of the 8 corner vectors by cosine similarity,
region-growing so neighboring cells agree on which cluster is "positive",
and per-vertex signed magnitudes (vector norm, or a neighborhood-mean
pseudo-distance for unit fields). Everything is deterministic: fixed
traversal orders, fixed tie rules, canonical output ordering.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .field_oracle import FieldGrid, FieldKind
from .geometry import TriMesh
from .grid_ops import DIV_THRESHOLD_DEFAULT, divergence, surface_cells
from .mc_tables import CORNER_OFFSETS, EDGE_ENDPOINTS, EDGE_TABLE, TRI_TABLE

# A cell edge whose endpoint directions have cosine at or below this is a
# genuine surface crossing; used to close pinholes the divergence threshold
# misses where the surface clips only a cell corner.
_FLIP_COS = -0.2
# Pseudo-distances at or above this carry no surface information; edges with
# both endpoints uninformative fall back to their midpoint.
_UNINFORMATIVE = 0.999
# Numeric tie window for clustering and orientation decisions.
_TIE_EPS = 1e-9

# Lexicographic list of the 28 corner pairs, seed search order.
_PAIR_P, _PAIR_Q = np.array(
    [(p, q) for p in range(8) for q in range(p + 1, 8)], dtype=np.int64
).T


def _cell_corner_vertex_ids(cell_lin: np.ndarray, res: tuple[int, int, int]) -> np.ndarray:
    """(n, 8) vertex linear ids for cells given by linear index (x-fastest)."""
    nx, ny, _ = res
    ncx, ncy = nx - 1, ny - 1
    cx = cell_lin % ncx
    cy = (cell_lin // ncx) % ncy
    cz = cell_lin // (ncx * ncy)
    ox, oy, oz = CORNER_OFFSETS[:, 0], CORNER_OFFSETS[:, 1], CORNER_OFFSETS[:, 2]
    return (cx[:, None] + ox) + nx * ((cy[:, None] + oy) + ny * (cz[:, None] + oz))


def _unit(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.where(norms > 0.0, norms, 1.0)


def _cluster_batch(units: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Two-cluster corner assignment for (n, 8, 3) unit corner vectors.

    Returns (labels_a (n, 8) bool, seeds (n, 2) int, keep (n,) bool); cells
    whose corners are all effectively identical are marked keep=False.
    """
    cos = np.einsum("npc,nqc->npq", units, units)
    pair_cos = cos[:, _PAIR_P, _PAIR_Q]
    k = np.argmin(pair_cos, axis=1)
    rows = np.arange(len(units))
    seeds = np.column_stack([_PAIR_P[k], _PAIR_Q[k]])
    keep = pair_cos[rows, k] < 1.0 - _TIE_EPS
    cos_p = cos[rows, seeds[:, 0], :]
    cos_q = cos[rows, seeds[:, 1], :]
    labels_a = cos_p >= cos_q
    return labels_a, seeds, keep


def cluster_cell(corners: np.ndarray) -> tuple[np.ndarray, tuple[int, int]] | None:
    """Split 8 corner vectors of one cell into two direction clusters.

    The seed pair is the corner pair with the lowest cosine similarity
    (lexicographically first on ties); every other corner joins the seed it
    is more similar to, ties and zero-norm corners going to cluster A (the
    first seed's cluster).

    Args:
        corners: (8, 3) field vectors at the cell corners.

    Returns:
        (labels, (seed_a, seed_b)) where labels is a (8,) bool array, True
        for cluster A; or None when all corners are effectively identical
        (no crossing).
    """
    u = _unit(np.asarray(corners, dtype=np.float64).reshape(1, 8, 3))
    labels_a, seeds, keep = _cluster_batch(u)
    if not keep[0]:
        return None
    return labels_a[0], (int(seeds[0, 0]), int(seeds[0, 1]))


# All 2^8 sign patterns over the 8 corners (bit c = corner c in cluster B),
# and per pattern the same-cluster mask over the 28 corner pairs.
_PATTERNS = ((np.arange(256)[:, None] >> np.arange(8)) & 1).astype(bool)
_PAIR_SAME = _PATTERNS[:, _PAIR_P] == _PATTERNS[:, _PAIR_Q]


def _refine_clusters_metric(
    positions: np.ndarray,
    vecs: np.ndarray,
    units: np.ndarray,
    seeds: np.ndarray,
    spacing: float,
) -> np.ndarray:
    """Corner partition from cosine plus surface-anchor side tests.

    Distance-scaled fields give every corner its exact surface point
    s = p + v. Whether two corners lie on the same side of the surface then
    has a metric answer: test each corner against the other's local surface
    plane (anchor s, normal = direction), counting only tests whose
    perpendicular offset stays under half a cell (beyond that the local
    plane says nothing). Cosine evidence alone cannot separate corners
    orthogonal to both seeds (90-degree surface junctions); these tests can.
    The returned partition maximizes total pairwise agreement over all
    splits that separate the seed pair. True = cluster A (the first seed's).
    """
    n = len(units)
    cos = np.einsum("npc,nqc->npq", units, units)
    pair_cos = cos[:, _PAIR_P, _PAIR_Q]
    w_same = np.maximum(pair_cos, 0.0)
    w_opp = np.maximum(-pair_cos, 0.0)
    anchors = positions + vecs
    for p, q in ((_PAIR_P, _PAIR_Q), (_PAIR_Q, _PAIR_P)):
        diff = positions[:, q, :] - anchors[:, p, :]
        along = np.einsum("nkc,nkc->nk", diff, units[:, p, :])
        perp = np.linalg.norm(diff - along[..., None] * units[:, p, :], axis=-1)
        ok = perp <= 0.5 * spacing
        conf = np.abs(along) / spacing
        w_opp += np.where(ok & (along > 0.0), conf, 0.0)
        w_same += np.where(ok & (along < 0.0), conf, 0.0)
    score = w_same @ _PAIR_SAME.T + w_opp @ (~_PAIR_SAME).T
    rows = np.arange(n)
    separates = _PATTERNS[:, seeds[:, 0]] != _PATTERNS[:, seeds[:, 1]]
    score[~separates.T] = -np.inf
    best = score.argmax(axis=1)
    labels = _PATTERNS[best]
    return labels == labels[rows, seeds[:, 0]][:, None]


def _cluster_directions(units: np.ndarray, labels_a: np.ndarray, seeds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean direction per cluster, unit length, seed vector fallback."""
    w = labels_a[..., None].astype(np.float64)
    sum_a = (units * w).sum(axis=1)
    sum_b = (units * (1.0 - w)).sum(axis=1)
    rows = np.arange(len(units))
    na = np.linalg.norm(sum_a, axis=1)
    nb = np.linalg.norm(sum_b, axis=1)
    dir_a = np.where(na[:, None] > 1e-12, sum_a / np.where(na[:, None] > 0, na[:, None], 1.0), units[rows, seeds[:, 0]])
    dir_b = np.where(nb[:, None] > 1e-12, sum_b / np.where(nb[:, None] > 0, nb[:, None], 1.0), units[rows, seeds[:, 1]])
    return dir_a, dir_b


@njit(cache=True)
def _grow_kernel(nbr, dir_a, dir_b, flags, tie_eps):
    """BFS over active cells; returns the number of components.

    nbr holds, per active cell, the active-array index of each of the six
    face neighbors (-1 when absent). Neighbor axis = column // 2. The
    positive cluster of a newly reached cell is the one more aligned with
    the current cell's positive direction; near-ties fall back to the
    smaller |(v + vhat) . d| bisector score along the step axis, then to A.
    """
    n = nbr.shape[0]
    visited = np.zeros(n, dtype=np.bool_)
    queue = np.empty(n, dtype=np.int64)
    components = 0
    for s in range(n):
        if visited[s]:
            continue
        components += 1
        visited[s] = True
        flags[s] = True
        queue[0] = s
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            if flags[u]:
                vx, vy, vz = dir_a[u, 0], dir_a[u, 1], dir_a[u, 2]
            else:
                vx, vy, vz = dir_b[u, 0], dir_b[u, 1], dir_b[u, 2]
            for j in range(6):
                w = nbr[u, j]
                if w < 0 or visited[w]:
                    continue
                visited[w] = True
                ca = dir_a[w, 0] * vx + dir_a[w, 1] * vy + dir_a[w, 2] * vz
                cb = dir_b[w, 0] * vx + dir_b[w, 1] * vy + dir_b[w, 2] * vz
                if abs(ca - cb) > tie_eps:
                    flags[w] = ca > cb
                else:
                    axis = j // 2
                    sa = abs(dir_a[w, axis] + (vx if axis == 0 else vy if axis == 1 else vz))
                    sb = abs(dir_b[w, axis] + (vx if axis == 0 else vy if axis == 1 else vz))
                    if abs(sa - sb) > tie_eps:
                        flags[w] = sa < sb
                    else:
                        flags[w] = True
                queue[tail] = w
                tail += 1
    return components


def grow_orientation(
    cell_lin: np.ndarray,
    cell_res: tuple[int, int, int],
    dir_a: np.ndarray,
    dir_b: np.ndarray,
) -> tuple[np.ndarray, int]:
    """Choose a positive cluster per active cell, consistently per component.

    Breadth-first over face-adjacent active cells, starting each component
    at its lowest linear cell index with cluster A positive; isolated cells
    therefore end A-positive.

    Args:
        cell_lin: sorted linear indices (x-fastest) of active cells.
        cell_res: cell-grid resolution (nx-1, ny-1, nz-1).
        dir_a / dir_b: (n, 3) cluster mean directions per active cell.

    Returns:
        (flags (n,) bool with True = cluster A positive, component count).
    """
    n = len(cell_lin)
    flags = np.ones(n, dtype=np.bool_)
    if n == 0:
        return flags, 0
    ncx, ncy, ncz = cell_res
    idx_map = np.full(ncx * ncy * ncz, -1, dtype=np.int64)
    idx_map[cell_lin] = np.arange(n)
    cx = cell_lin % ncx
    cy = (cell_lin // ncx) % ncy
    cz = cell_lin // (ncx * ncy)
    nbr = np.full((n, 6), -1, dtype=np.int64)
    steps = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
    for j, (dx, dy, dz) in enumerate(steps):
        wx, wy, wz = cx + dx, cy + dy, cz + dz
        ok = (wx >= 0) & (wx < ncx) & (wy >= 0) & (wy < ncy) & (wz >= 0) & (wz < ncz)
        wlin = wx[ok] + ncx * (wy[ok] + ncy * wz[ok])
        nbr[ok, j] = idx_map[wlin]
    components = _grow_kernel(nbr, np.ascontiguousarray(dir_a), np.ascontiguousarray(dir_b), flags, _TIE_EPS)
    return flags, components


def _pseudo_distance(vecs: np.ndarray, res: tuple[int, int, int]) -> np.ndarray:
    """Surface-proximity estimate per grid vertex: norm of the mean of the
    vertex vector and its axis neighbors (up to 6; fewer on the boundary).

    Around the surface the mean shrinks, both because opposing directions
    cancel and because a fitted direction field dips through zero where it
    flips; away from it the mean stays at the field's unit scale. The dip
    profile is what linear interpolation places crossings with.
    """
    nx, ny, nz = res
    f = vecs.reshape(nz, ny, nx, 3)
    acc = f.copy()
    cnt = np.ones((nz, ny, nx))
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        acc[lo] += f[hi]
        cnt[lo] += 1.0
        acc[hi] += f[lo]
        cnt[hi] += 1.0
    return (np.linalg.norm(acc, axis=-1) / cnt).ravel()


def _shift_slices(n: int, d: int) -> tuple[slice, slice]:
    """(destination, source) slices so dst[i] aligns with src[i + d]."""
    return slice(max(0, -d), n - max(0, d)), slice(max(0, d), n - max(0, -d))


def _dilate26(mask3d: np.ndarray) -> np.ndarray:
    """26-neighborhood binary dilation."""
    out = mask3d.copy()
    nz, ny, nx = mask3d.shape
    for dz in (-1, 0, 1):
        oz, sz = _shift_slices(nz, dz)
        for dy in (-1, 0, 1):
            oy, sy = _shift_slices(ny, dy)
            for dx in (-1, 0, 1):
                if dz == dy == dx == 0:
                    continue
                ox, sx = _shift_slices(nx, dx)
                out[oz, oy, ox] |= mask3d[sz, sy, sx]
    return out


def _min_edge_cos(units: np.ndarray) -> np.ndarray:
    """Lowest cosine over the 12 cell edges for (n, 8, 3) unit corners."""
    a = units[:, EDGE_ENDPOINTS[:, 0], :]
    b = units[:, EDGE_ENDPOINTS[:, 1], :]
    return np.einsum("nec,nec->ne", a, b).min(axis=1)


def _close_active_set(
    active: np.ndarray,
    div_vals: np.ndarray,
    unit_grid: np.ndarray,
    res: tuple[int, int, int],
) -> tuple[np.ndarray, int]:
    """Add neighbor cells with a genuine direction flip that the divergence
    threshold missed (surface clipping a cell corner contributes too little
    divergence). Gated to non-positive divergence so medial cells and cells
    past an open rim stay out. Iterates to fixpoint."""
    nx, ny, nz = res
    shape3d = (nz - 1, ny - 1, nx - 1)
    added_total = 0
    flat = active.copy()
    for _ in range(64):
        cand = _dilate26(flat.reshape(shape3d)).ravel() & ~flat
        cand &= div_vals <= 0.0
        cand_ids = np.flatnonzero(cand)
        if cand_ids.size == 0:
            break
        corners = unit_grid[_cell_corner_vertex_ids(cand_ids, res)]
        hit = _min_edge_cos(corners) <= _FLIP_COS
        if not hit.any():
            break
        flat[cand_ids[hit]] = True
        added_total += int(hit.sum())
    return flat, added_total


def _vertex_positions(lin: np.ndarray, grid: FieldGrid) -> np.ndarray:
    nx, ny, _ = grid.resolution
    ix = lin % nx
    iy = (lin // nx) % ny
    iz = lin // (nx * ny)
    return grid.origin + np.column_stack([ix, iy, iz]) * grid.spacing


def _triangulate_cells(
    grid: FieldGrid,
    cell_ids: np.ndarray,
    signed_vals: np.ndarray,
    uninformative: np.ndarray | None = None,
) -> TriMesh:
    """Emit triangles for the given cells from per-vertex signed values.

    Output vertices are deduplicated on grid edges (canonical order: sorted
    edge key), so faces from neighboring cells share vertices exactly.
    Crossing edges whose endpoints are both flagged uninformative get their
    vertex at the edge midpoint instead of the interpolated position.
    """
    res = grid.resolution
    nverts = grid.n_values
    corner_ids = _cell_corner_vertex_ids(cell_ids, res)
    inside = signed_vals < 0.0
    case = (inside[corner_ids] << np.arange(8, dtype=np.int64)).sum(axis=1)
    emit = TRI_TABLE[case]
    valid = emit >= 0
    if not valid.any():
        return TriMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
    cell_rows = np.repeat(np.arange(len(cell_ids)), 16).reshape(-1, 16)[valid]
    edge_ids = emit[valid]
    va = corner_ids[cell_rows, EDGE_ENDPOINTS[edge_ids, 0]]
    vb = corner_ids[cell_rows, EDGE_ENDPOINTS[edge_ids, 1]]
    lo = np.minimum(va, vb)
    hi = np.maximum(va, vb)
    keys = lo * np.int64(nverts) + hi
    uniq, inverse = np.unique(keys, return_inverse=True)
    u_lo = (uniq // nverts).astype(np.int64)
    u_hi = (uniq % nverts).astype(np.int64)
    v0 = signed_vals[u_lo]
    v1 = signed_vals[u_hi]
    denom = v0 - v1
    # Both corner values can be exactly 0 (surface through both corners).
    t = np.where(denom != 0.0, v0 / np.where(denom != 0.0, denom, 1.0), 0.5)
    if uninformative is not None:
        t = np.where(uninformative[u_lo] & uninformative[u_hi], 0.5, t)
    p0 = _vertex_positions(u_lo, grid)
    p1 = _vertex_positions(u_hi, grid)
    vertices = p0 + t[:, None] * (p1 - p0)
    faces = inverse.reshape(-1, 3)[:, [0, 2, 1]]
    return TriMesh(vertices, faces)


def extract_mesh_scalar(grid: FieldGrid, iso: float = 0.0) -> TriMesh:
    """Classic marching cubes of a scalar grid at an iso level.

    Args:
        grid: scalar FieldGrid (any scalar kind).
        iso: level to extract.

    Returns:
        Triangle mesh with vertices linearly interpolated on sign-changing
        cell edges, deduplicated across cells; empty mesh when the level
        set is empty.
    """
    if grid.is_vector:
        raise TypeError("extract_mesh_scalar requires a scalar grid")
    vals = grid.values.astype(np.float64) - iso
    nx, ny, nz = grid.resolution
    inside = (vals < 0.0).reshape(nz, ny, nx)
    # A cell is worth visiting only if its corners mix signs.
    lo = inside[:-1, :-1, :-1]
    any_in = lo.copy()
    all_in = lo.copy()
    for dz in (0, 1):
        for dy in (0, 1):
            for dx in (0, 1):
                if dz == dy == dx == 0:
                    continue
                blk = inside[dz: nz - 1 + dz, dy: ny - 1 + dy, dx: nx - 1 + dx]
                any_in |= blk
                all_in &= blk
    mixed = np.flatnonzero((any_in & ~all_in).ravel())
    return _triangulate_cells(grid, mixed, vals)


def extract_mesh_vector(
    grid: FieldGrid,
    kind: FieldKind | None = None,
    threshold: float = DIV_THRESHOLD_DEFAULT,
    stats_out: dict | None = None,
) -> TriMesh:
    """Surface extraction from a directional field (Algorithm: divergence
    selection, corner clustering, orientation growing, signed-norm corners,
    standard case tables).

    Args:
        grid: vector FieldGrid holding unit directions (VT) or
            distance-scaled directions (DVT).
        kind: how to read vector norms; defaults to grid.kind. VT uses the
            neighborhood-mean pseudo-distance with midpoint fallback on
            uninformative edges (pass the raw, unnormalized field from a
            fitted model so the norm dip is preserved); DVT uses vector
            norms directly.
        threshold: divergence cutoff for active cells.
        stats_out: optional dict that receives ExtractionStats fields.

    Returns:
        Extracted TriMesh; empty when no cells are active.
    """
    if not grid.is_vector:
        raise TypeError("extract_mesh_vector requires a vector grid")
    kind = grid.kind if kind is None else kind
    if kind not in (FieldKind.VT, FieldKind.DVT):
        raise ValueError("kind must be VT or DVT")
    res = grid.resolution
    vecs = grid.values.astype(np.float64)
    units = _unit(vecs)
    # Cell selection runs on directions only: a distance-scaled field damps
    # the flip signature near the surface, so normalize before divergence.
    unit_grid = FieldGrid(FieldKind.VT, res, grid.origin, grid.spacing, units)
    div = divergence(unit_grid)
    active = surface_cells(div, threshold).mask
    active, closure_added = _close_active_set(active, div.values, units, res)
    cell_ids = np.flatnonzero(active)

    stats = {
        "active_cells": int(cell_ids.size),
        "closure_added": closure_added,
        "degenerate_skipped": 0,
        "orientation_components": 0,
    }
    if cell_ids.size == 0:
        if stats_out is not None:
            stats_out.update(stats)
        return TriMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))

    corner_ids = _cell_corner_vertex_ids(cell_ids, res)
    labels_a, seeds, keep = _cluster_batch(units[corner_ids])
    stats["degenerate_skipped"] = int((~keep).sum())
    cell_ids = cell_ids[keep]
    corner_ids = corner_ids[keep]
    labels_a = labels_a[keep]
    seeds = seeds[keep]
    if cell_ids.size == 0:
        if stats_out is not None:
            stats_out.update(stats)
        return TriMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
    if kind == FieldKind.DVT:
        positions = _vertex_positions(corner_ids.ravel(), grid).reshape(-1, 8, 3)
        labels_a = _refine_clusters_metric(
            positions, vecs[corner_ids], units[corner_ids], seeds,
            float(grid.spacing.min()),
        )

    dir_a, dir_b = _cluster_directions(units[corner_ids], labels_a, seeds)
    nx, ny, nz = res
    flags, n_comp = grow_orientation(cell_ids, (nx - 1, ny - 1, nz - 1), dir_a, dir_b)
    stats["orientation_components"] = n_comp

    # Vertex signs by vote: each cell marks its positive-cluster corners +1.
    votes = np.zeros(grid.n_values, dtype=np.int32)
    corner_sign = np.where(labels_a == flags[:, None], 1, -1).astype(np.int32)
    np.add.at(votes, corner_ids.ravel(), corner_sign.ravel())
    sign = np.where(votes < 0, -1.0, 1.0)

    if kind == FieldKind.VT:
        mag = _pseudo_distance(vecs, res)
        uninformative = mag >= _UNINFORMATIVE
    else:
        mag = np.linalg.norm(vecs, axis=1)
        uninformative = None
    signed_vals = sign * mag

    mesh = _triangulate_cells(grid, cell_ids, signed_vals, uninformative)
    if stats_out is not None:
        stats_out.update(stats)
    return mesh
