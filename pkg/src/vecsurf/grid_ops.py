"""Discrete operators on field grids: cell-centered divergence, level-set
cell detection, and vertex gradients.

The divergence is deliberately not normalized by spacing: a unit vector
component flipping sign across a flat interface contributes exactly -2 to
the straddling cell at any resolution, which keeps the detection threshold
resolution independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field_oracle import FieldGrid, FieldKind

# Detection threshold for predicted (noisy) fields.
DIV_THRESHOLD_DEFAULT = -1.5
# Tighter threshold usable on exact oracle fields.
DIV_THRESHOLD_EXACT = -1.9


@dataclass
class CellMask:
    """Boolean flag per grid cell (a cell is the 8 surrounding vertices).

    origin is the first cell center; mask is x-fastest like FieldGrid values.
    """

    resolution: tuple[int, int, int]
    origin: np.ndarray
    spacing: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        self.resolution = tuple(int(r) for r in self.resolution)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.spacing = np.asarray(self.spacing, dtype=np.float64).reshape(3)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        nx, ny, nz = self.resolution
        if self.mask.size != nx * ny * nz:
            raise ValueError("mask length does not match resolution")

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    def indices(self) -> np.ndarray:
        """Linear indices of flagged cells."""
        return np.flatnonzero(self.mask)

    def cell_coords(self, linear: np.ndarray) -> np.ndarray:
        """(n, 3) integer cell coordinates for linear indices."""
        nx, ny, _ = self.resolution
        ix = linear % nx
        iy = (linear // nx) % ny
        iz = linear // (nx * ny)
        return np.column_stack([ix, iy, iz])

    def cell_centers(self, linear: np.ndarray) -> np.ndarray:
        """(n, 3) center positions for linear cell indices."""
        return self.origin + self.cell_coords(linear) * self.spacing


def divergence(grid: FieldGrid) -> FieldGrid:
    """Cell-centered discrete divergence of a vector grid.

    Per cell and axis, the four cell edges along that axis each contribute
    the difference of the axis component between their far and near ends;
    the cell value is the sum over axes of the per-axis edge means. No
    division by spacing (see module docstring).

    Args:
        grid: vector-valued FieldGrid, each axis resolution >= 2.

    Returns:
        Scalar FieldGrid of kind DIVERGENCE with per-cell resolution
        (nx-1, ny-1, nz-1), origin shifted to cell centers, float64 values.

    Raises:
        TypeError: if the grid is not vector valued.
    """
    if not grid.is_vector:
        raise TypeError("divergence requires a vector grid")
    if any(r < 2 for r in grid.resolution):
        raise ValueError("resolution must be >= 2 per axis")
    v = grid.values_zyx().astype(np.float64)

    dx = np.diff(v[..., 0], axis=2)
    dy = np.diff(v[..., 1], axis=1)
    dz = np.diff(v[..., 2], axis=0)
    div = 0.25 * (
        dx[:-1, :-1, :] + dx[:-1, 1:, :] + dx[1:, :-1, :] + dx[1:, 1:, :]
        + dy[:-1, :, :-1] + dy[:-1, :, 1:] + dy[1:, :, :-1] + dy[1:, :, 1:]
        + dz[:, :-1, :-1] + dz[:, :-1, 1:] + dz[:, 1:, :-1] + dz[:, 1:, 1:]
    )
    nx, ny, nz = grid.resolution
    return FieldGrid(
        FieldKind.DIVERGENCE,
        (nx - 1, ny - 1, nz - 1),
        grid.origin + grid.spacing / 2.0,
        grid.spacing,
        div.ravel(),
    )


def surface_cells(div_grid: FieldGrid, threshold: float = DIV_THRESHOLD_DEFAULT) -> CellMask:
    """Cells whose divergence is at or below the detection threshold."""
    if div_grid.is_vector:
        raise TypeError("surface_cells requires a scalar (divergence) grid")
    return CellMask(
        div_grid.resolution,
        div_grid.origin,
        div_grid.spacing,
        div_grid.values <= threshold,
    )


def gradient(grid: FieldGrid) -> FieldGrid:
    """Vertex-centered numerical gradient of a scalar grid.

    Central differences inside, one-sided at the boundary, scaled by the
    grid spacing (np.gradient semantics).
    """
    if grid.is_vector:
        raise TypeError("gradient requires a scalar grid")
    a = grid.values_zyx().astype(np.float64)
    gz, gy, gx = np.gradient(a, grid.spacing[2], grid.spacing[1], grid.spacing[0])
    vec = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    return FieldGrid(FieldKind.GRADIENT, grid.resolution, grid.origin, grid.spacing, vec)


def normalize_vectors(grid: FieldGrid) -> FieldGrid:
    """Unit-normalize a vector grid; zero vectors stay zero."""
    if not grid.is_vector:
        raise TypeError("normalize_vectors requires a vector grid")
    v = grid.values.astype(np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return FieldGrid(FieldKind.VT, grid.resolution, grid.origin, grid.spacing, v / safe)


def vector_field_from_udf(udf_grid: FieldGrid) -> FieldGrid:
    """Closest-direction field recovered from an unsigned distance grid as
    the normalized negative gradient."""
    g = gradient(udf_grid)
    g.values *= -1.0
    return normalize_vectors(g)


def dump_cell_mask(path: str | Path, cells: CellMask) -> None:
    """Run-length encoded text diagnostic: header plus start:length runs of
    flagged cells in linear (x-fastest) order."""
    nx, ny, nz = cells.resolution
    idx = np.flatnonzero(cells.mask)
    runs = []
    if idx.size:
        breaks = np.flatnonzero(np.diff(idx) > 1)
        run_starts = np.concatenate([[idx[0]], idx[breaks + 1]])
        run_ends = np.concatenate([idx[breaks], [idx[-1]]])
        runs = [f"{s}:{e - s + 1}" for s, e in zip(run_starts, run_ends)]
    lines = [f"resolution={nx} {ny} {nz} flagged={cells.count}"]
    lines.extend(runs)
    Path(path).write_text("\n".join(lines) + "\n")
