"""Exact field oracles over a triangle mesh: closest-direction vectors,
their distance-scaled variant, and signed/unsigned distances, plus training
sample generation and dense grid evaluation.

All oracles are pure functions of an immutable SpatialIndex, so batches may
be evaluated in any order or in parallel with bit-identical results.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import SpatialIndex, TriMesh, sample_surface_points

# Norm floor for the distance-scaled vector field.
DIST_FLOOR = 1e-5
# Queries closer than this to the surface use the offset limit rule.
SURFACE_EPS = 1e-9
# Offset applied on the positive normal side for surface-point queries.
SURFACE_OFFSET = 1e-6
# Default truncation radii for scalar training targets.
TAU_SDF = 0.1
TAU_UDF = 0.2
# Default sampling domain.
DOMAIN_LO = (-1.0, -1.0, -1.0)
DOMAIN_HI = (1.0, 1.0, 1.0)

_MAGIC = b"VFG1"


class FieldKind(IntEnum):
    """Field payload type. Values double as the on-disk kind byte."""

    VT = 0
    DVT = 1
    SDF = 2
    UDF = 3
    DIVERGENCE = 4
    GRADIENT = 5

    @property
    def is_vector(self) -> bool:
        return self in (FieldKind.VT, FieldKind.DVT, FieldKind.GRADIENT)


@dataclass
class FieldGrid:
    """Dense field samples on a regular grid.

    values are stored x-fastest: linear index ix + nx*(iy + ny*iz). Scalars
    are (n,), vectors (n, 3). spacing is per axis.
    """

    kind: FieldKind
    resolution: tuple[int, int, int]
    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.resolution = tuple(int(r) for r in self.resolution)
        if any(r < 1 for r in self.resolution):
            raise ValueError("resolution must be >= 1 per axis")
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)
        self.values = np.asarray(self.values)
        n = self.n_values
        want = (n, 3) if self.kind.is_vector else (n,)
        if self.values.shape != want:
            raise ValueError(f"values shape {self.values.shape} != {want}")

    @property
    def n_values(self) -> int:
        nx, ny, nz = self.resolution
        return nx * ny * nz

    @property
    def is_vector(self) -> bool:
        return self.kind.is_vector

    def axis_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vertex coordinates along each axis."""
        return tuple(
            self.origin[a] + self.spacing[a] * np.arange(self.resolution[a])
            for a in range(3)
        )

    def vertex_positions(self) -> np.ndarray:
        """All vertex positions, (n, 3), x-fastest order."""
        xs, ys, zs = self.axis_coords()
        zg, yg, xg = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([xg.ravel(), yg.ravel(), zg.ravel()])

    def values_zyx(self) -> np.ndarray:
        """values reshaped to (nz, ny, nx) or (nz, ny, nx, 3), zero copy."""
        nx, ny, nz = self.resolution
        tail = (3,) if self.is_vector else ()
        return self.values.reshape((nz, ny, nx) + tail)

    def value_at(self, ix: int, iy: int, iz: int) -> np.ndarray | float:
        nx, ny, _ = self.resolution
        v = self.values[ix + nx * (iy + ny * iz)]
        return v if self.is_vector else float(v)


def save_field_grid(path: str | Path, grid: FieldGrid) -> None:
    """Write a grid in the binary format: magic "VFG1", kind byte,
    resolution u32 LE, origin and spacing f64 LE, payload f32 LE x-fastest."""
    nx, ny, nz = grid.resolution
    header = _MAGIC + struct.pack(
        "<BIII", int(grid.kind), nx, ny, nz
    ) + struct.pack("<3d", *grid.origin) + struct.pack("<3d", *grid.spacing)
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_field_grid(path: str | Path) -> FieldGrid:
    """Read a grid written by save_field_grid."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a field grid file (bad magic)")
    kind_b, nx, ny, nz = struct.unpack_from("<BIII", raw, 4)
    origin = np.array(struct.unpack_from("<3d", raw, 17))
    spacing = np.array(struct.unpack_from("<3d", raw, 41))
    kind = FieldKind(kind_b)
    n = nx * ny * nz
    count = n * 3 if kind.is_vector else n
    values = np.frombuffer(raw, dtype="<f4", count=count, offset=65)
    if kind.is_vector:
        values = values.reshape(n, 3)
    if values.size != count:
        raise ValueError("truncated field grid file")
    return FieldGrid(kind, (nx, ny, nz), origin, spacing, values.copy())


def dump_field_text(path: str | Path, grid: FieldGrid) -> None:
    """Plain-text debug dump: one header line, then one value per line."""
    nx, ny, nz = grid.resolution
    lines = [
        f"kind={grid.kind.name} resolution={nx} {ny} {nz} "
        f"origin={grid.origin[0]:.17g} {grid.origin[1]:.17g} {grid.origin[2]:.17g} "
        f"spacing={grid.spacing[0]:.17g} {grid.spacing[1]:.17g} {grid.spacing[2]:.17g}"
    ]
    if grid.is_vector:
        lines.extend(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}" for v in grid.values)
    else:
        lines.extend(f"{v:.9g}" for v in grid.values)
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class TrainingSample:
    """One supervision record: a position and its oracle targets per kind."""

    position: np.ndarray
    targets: Mapping[FieldKind, np.ndarray | float] = field(default_factory=dict)


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    return np.atleast_2d(pts), single


def _direction_batch(
    index: SpatialIndex, pts: np.ndarray, closest: tuple | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions toward the closest surface point plus distances.

    Surface points (distance < SURFACE_EPS) take the limit value: the query
    is nudged by SURFACE_OFFSET along the closest triangle's positive normal
    and the direction recomputed from there. closest optionally reuses a
    prior index.closest_points(pts) result.
    """
    cp, dist, tri = index.closest_points(pts) if closest is None else closest
    disp = cp - pts
    on_surface = dist < SURFACE_EPS
    if np.any(on_surface):
        normals = index.triangle_normal(tri[on_surface])
        moved = pts[on_surface] + SURFACE_OFFSET * normals
        cp2, _, _ = index.closest_points(moved)
        disp[on_surface] = cp2 - moved
    norms = np.linalg.norm(disp, axis=1, keepdims=True)
    # A zero norm can only remain if the offset landed back on the surface,
    # which the offset magnitude (1e-6 >> SURFACE_EPS) rules out.
    return disp / norms, dist


def vt_at(index: SpatialIndex, x: np.ndarray) -> np.ndarray:
    """Unit vector from x toward its closest surface point.

    Args:
        index: spatial index of the target surface.
        x: (3,) position or (n, 3) batch.

    Returns:
        Unit 3-vector(s), same leading shape as x. On the surface itself the
        one-sided limit is used (offset along the positive triangle normal),
        so the result there is the inward-facing unit normal of that side.
    """
    pts, single = _as_batch(x)
    v, _ = _direction_batch(index, pts)
    return v[0] if single else v


def dvt_at(index: SpatialIndex, x: np.ndarray) -> np.ndarray:
    """Closest-direction vector scaled by distance, norm floored at 1e-5.

    Equals vt_at(x) * max(udf_at(x), DIST_FLOOR).
    """
    pts, single = _as_batch(x)
    v, dist = _direction_batch(index, pts)
    out = v * np.maximum(dist, DIST_FLOOR)[:, None]
    return out[0] if single else out


def udf_at(index: SpatialIndex, x: np.ndarray, truncation: float | None = None) -> np.ndarray | float:
    """Unsigned distance to the surface, optionally truncated at a radius."""
    pts, single = _as_batch(x)
    _, dist, _ = index.closest_points(pts)
    if truncation is not None:
        dist = np.minimum(dist, truncation)
    return float(dist[0]) if single else dist


def sdf_at(index: SpatialIndex, x: np.ndarray, truncation: float | None = None) -> np.ndarray | float:
    """Signed distance to the surface (negative inside).

    Args:
        index: spatial index; the mesh must be watertight so that inside is
            well defined (sign from the closest feature's pseudonormal).
        x: (3,) position or (n, 3) batch.
        truncation: optional radius to clamp the magnitude to.

    Raises:
        ValueError: "sign undefined" for non-watertight meshes.
    """
    if not index.is_watertight():
        raise ValueError("sign undefined: mesh is not watertight")
    pts, single = _as_batch(x)
    cp, dist, tri = index.closest_points(pts)
    sign = np.where(index.inside_from_closest(pts, cp, tri), -1.0, 1.0)
    val = sign * dist
    if truncation is not None:
        val = np.clip(val, -truncation, truncation)
    return float(val[0]) if single else val


def sample_training_points(
    mesh: TriMesh,
    n_near: int,
    n_uniform: int,
    sigma_near: float = 0.05,
    seed: int = 0,
    bounds: tuple = (DOMAIN_LO, DOMAIN_HI),
) -> np.ndarray:
    """Training positions: surface samples with Gaussian jitter plus uniform
    fill of the domain.

    Args:
        mesh: surface to sample near.
        n_near: count of jittered surface samples (isotropic std sigma_near).
        n_uniform: count of uniform samples over bounds.
        sigma_near: jitter standard deviation.
        seed: RNG seed; output is bit-identical per seed.

    Returns:
        (n_near + n_uniform, 3) positions, near block first.
    """
    if n_near < 0 or n_uniform < 0:
        raise ValueError("counts must be >= 0")
    rng = np.random.default_rng(seed)
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    parts = []
    if n_near > 0:
        base = sample_surface_points(mesh, n_near, seed=rng)
        parts.append(base + rng.normal(0.0, sigma_near, size=base.shape))
    if n_uniform > 0:
        parts.append(rng.uniform(lo, hi, size=(n_uniform, 3)))
    if not parts:
        return np.empty((0, 3))
    return np.concatenate(parts, axis=0)


def training_target(
    index: SpatialIndex,
    kind: FieldKind,
    positions: np.ndarray,
    truncation: float | None = None,
) -> np.ndarray:
    """Oracle targets for a batch of training positions.

    Scalar kinds are truncated at their default radius (TAU_SDF / TAU_UDF)
    unless an explicit truncation is given; pass np.inf to disable.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if kind == FieldKind.VT:
        return vt_at(index, pts)
    if kind == FieldKind.DVT:
        return dvt_at(index, pts)
    if kind == FieldKind.SDF:
        tau = TAU_SDF if truncation is None else truncation
        return sdf_at(index, pts, truncation=tau)
    if kind == FieldKind.UDF:
        tau = TAU_UDF if truncation is None else truncation
        return udf_at(index, pts, truncation=tau)
    raise ValueError(f"no oracle for kind {kind!r}")


def make_training_samples(
    index: SpatialIndex,
    positions: np.ndarray,
    kinds: Iterable[FieldKind] = (FieldKind.VT,),
) -> list[TrainingSample]:
    """Bundle positions with untruncated oracle targets (inspection helper)."""
    pts = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    per_kind = {k: training_target(index, k, pts, truncation=np.inf) for k in kinds}
    return [
        TrainingSample(
            position=pts[i],
            targets={k: v[i] for k, v in per_kind.items()},
        )
        for i in range(len(pts))
    ]


def _grid_axes(
    resolution: int | Sequence[int], bounds: tuple
) -> tuple[tuple[int, int, int], np.ndarray, np.ndarray, list[np.ndarray]]:
    if np.isscalar(resolution):
        res = (int(resolution),) * 3
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != 3 or any(r < 2 for r in res):
        raise ValueError("resolution must be >= 2 per axis")
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    spacing = (hi - lo) / (np.array(res) - 1)
    axes = [lo[a] + spacing[a] * np.arange(res[a]) for a in range(3)]
    return res, lo, spacing, axes


def sample_field_grids(
    index: SpatialIndex,
    kinds: Sequence[FieldKind],
    resolution: int | Sequence[int] = 64,
    bounds: tuple = (DOMAIN_LO, DOMAIN_HI),
) -> dict[FieldKind, FieldGrid]:
    """Evaluate several field kinds on one grid, sharing the closest-point
    pass (the dominant cost) between them.

    Args:
        index: surface index.
        kinds: field kinds to evaluate.
        resolution: vertex count per axis (scalar or 3-tuple), each >= 2.
        bounds: (lo, hi) corners of the sampling box.

    Returns:
        kind -> FieldGrid with float32 values.

    Raises:
        ValueError: "sign undefined" if SDF is requested on an open mesh.
    """
    kinds = list(kinds)
    if FieldKind.SDF in kinds and not index.is_watertight():
        raise ValueError("sign undefined: mesh is not watertight")
    res, lo, spacing, axes = _grid_axes(resolution, bounds)
    xs, ys, zs = axes
    zg, yg, xg = np.meshgrid(zs, ys, xs, indexing="ij")
    pts = np.column_stack([xg.ravel(), yg.ravel(), zg.ravel()])

    cp, dist, tri = index.closest_points(pts)
    dirs = None
    if any(k in (FieldKind.VT, FieldKind.DVT) for k in kinds):
        dirs, _ = _direction_batch(index, pts, closest=(cp, dist, tri))
    inside = None
    if FieldKind.SDF in kinds:
        inside = index.inside_from_closest(pts, cp, tri)

    out: dict[FieldKind, FieldGrid] = {}
    for kind in kinds:
        if kind == FieldKind.VT:
            values = dirs
        elif kind == FieldKind.DVT:
            values = dirs * np.maximum(dist, DIST_FLOOR)[:, None]
        elif kind == FieldKind.UDF:
            values = dist
        elif kind == FieldKind.SDF:
            values = np.where(inside, -dist, dist)
        else:
            raise ValueError(f"cannot sample kind {kind!r} from a mesh")
        out[kind] = FieldGrid(kind, res, lo, spacing, values.astype(np.float32))
    return out


def sample_field_grid(
    index: SpatialIndex,
    kind: FieldKind,
    resolution: int | Sequence[int] = 64,
    bounds: tuple = (DOMAIN_LO, DOMAIN_HI),
) -> FieldGrid:
    """Dense oracle evaluation at grid vertices (single kind)."""
    return sample_field_grids(index, [kind], resolution, bounds)[kind]
