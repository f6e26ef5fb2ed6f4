"""Evaluation protocol: symmetric Chamfer metric, viewpoint-limited
observation generation, and the reconstruct / complete / noise benchmark
driver with plain-text and CSV reports.

Chamfer values are reported multiplied by 1000. Every entry point is
deterministic for a fixed seed; shapes are independent, so a benchmark may
evaluate them concurrently and still assemble an identical report.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from io import StringIO
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .field_oracle import (
    DIST_FLOOR,
    FieldGrid,
    FieldKind,
    sample_field_grids,
    training_target,
)
from .geometry import SpatialIndex, TriMesh, sample_surface_points
from .grid_ops import gradient
from .mcvector import extract_mesh_scalar, extract_mesh_vector
from .neural_fit import TrainResult, model_field_grid, optimize_latent

# Camera ring for the V1..V8 viewpoints: azimuths on the equator, far
# enough out that visibility is effectively orthographic for unit shapes
# (a sphere's visible cap is (1 - r/d)/2 of its area, so d = 100 keeps it
# within half a percent of a true hemisphere).
VIEW_RADIUS = 100.0
N_VIEWS = 8
# Offset fraction shaving the visibility segment off its endpoints.
SEGMENT_EPS = 1e-5

_TASKS = ("reconstruct", "complete", "noise")


@dataclass(frozen=True)
class ViewSpec:
    """One of the eight evenly spaced equatorial viewpoints, V1 = +x."""

    view_id: str

    def __post_init__(self) -> None:
        valid = tuple(f"V{i}" for i in range(1, N_VIEWS + 1))
        if self.view_id not in valid:
            raise ValueError(f"view_id must be one of {valid}")

    @property
    def azimuth(self) -> float:
        return 2.0 * np.pi * (int(self.view_id[1:]) - 1) / N_VIEWS

    @property
    def position(self) -> np.ndarray:
        a = self.azimuth
        return VIEW_RADIUS * np.array([np.cos(a), np.sin(a), 0.0])

    @staticmethod
    def all_views() -> tuple["ViewSpec", ...]:
        return tuple(ViewSpec(f"V{i}") for i in range(1, N_VIEWS + 1))


def _directed_mean(
    points: np.ndarray,
    other_index: SpatialIndex | None,
    other_samples: np.ndarray | None,
    squared: bool,
) -> float:
    if other_samples is not None:
        d, _ = cKDTree(other_samples).query(points)
    else:
        _, d, _ = other_index.closest_points(points)
    return float((d * d).mean() if squared else d.mean())


def chamfer(
    mesh_a: TriMesh,
    mesh_b: TriMesh,
    n: int = 30000,
    resamplings: int = 3,
    seed: int = 0,
    to_samples: bool = False,
    squared: bool = False,
) -> float:
    """Symmetric Chamfer distance between two meshes, multiplied by 1000.

    Each direction samples n surface points and measures their mean
    distance to the other mesh (to its exact surface by default;
    to_samples=True measures to the other side's point samples instead).
    The two directed means are summed, unsquared unless squared=True, and
    averaged over resamplings. Either mesh being empty yields +infinity.
    Resampling r seeds both sides with seed + r, so swapping the arguments
    reproduces the same sample sets and the same value.
    """
    if mesh_a.n_triangles == 0 or mesh_b.n_triangles == 0:
        return float("inf")
    if mesh_a.triangle_areas().sum() == 0.0 or mesh_b.triangle_areas().sum() == 0.0:
        return float("inf")
    if n < 1 or resamplings < 1:
        raise ValueError("n and resamplings must be >= 1")
    index_a = SpatialIndex(mesh_a)
    index_b = SpatialIndex(mesh_b)
    total = 0.0
    for r in range(resamplings):
        sa = sample_surface_points(mesh_a, n, seed=seed + r)
        sb = sample_surface_points(mesh_b, n, seed=seed + r)
        ab = _directed_mean(sa, None if to_samples else index_b,
                            sb if to_samples else None, squared)
        ba = _directed_mean(sb, None if to_samples else index_a,
                            sa if to_samples else None, squared)
        total += ab + ba
    return 1000.0 * total / resamplings


def add_noise(points: np.ndarray, sigma: float, seed: int = 0) -> np.ndarray:
    """Isotropic Gaussian perturbation of a point set; sigma=0 is identity."""
    pts = np.asarray(points, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return pts.copy()
    rng = np.random.default_rng(seed)
    return pts + rng.normal(0.0, sigma, size=pts.shape)


def visible_observations(
    mesh: TriMesh | SpatialIndex,
    view: ViewSpec,
    n: int,
    kind: FieldKind,
    sigma_near: float = 0.05,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Observation set limited to the surface visible from one viewpoint.

    Surface samples are kept when the segment from the camera to the sample
    hits no other triangle first, then perturbed with the training
    sampler's near-surface jitter; targets come from the exact oracle at
    the perturbed positions.

    Returns:
        (positions (m, 3), targets) with m <= n visible observations.

    Raises:
        ValueError: "degenerate view" when nothing is visible.
    """
    index = mesh if isinstance(mesh, SpatialIndex) else SpatialIndex(mesh)
    samples = sample_surface_points(index.mesh, n, seed=seed)
    blocked = index.segments_blocked(view.position, samples, eps=SEGMENT_EPS)
    visible = samples[~blocked]
    if len(visible) == 0:
        raise ValueError(f"degenerate view: no surface visible from {view.view_id}")
    rng = np.random.default_rng(seed + 1)
    positions = visible + rng.normal(0.0, sigma_near, size=visible.shape)
    return positions, np.asarray(training_target(index, kind, positions))


def cloud_targets(
    cloud: np.ndarray, kind: FieldKind, positions: np.ndarray
) -> np.ndarray:
    """Field targets measured against a point cloud instead of a surface.

    The nearest cloud point stands in for the closest surface point, which
    is all an observed (possibly noisy) scan provides. Signed distance is
    unavailable: a cloud has no inside.
    """
    if kind == FieldKind.SDF:
        raise ValueError("sign undefined: a point cloud has no inside")
    pts = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    dist, idx = cKDTree(cloud).query(pts)
    if kind == FieldKind.UDF:
        return dist
    safe = np.maximum(dist, 1e-300)
    unit = (cloud[idx] - pts) / safe[:, None]
    if kind == FieldKind.VT:
        return unit
    return unit * np.maximum(dist, DIST_FLOOR)[:, None]


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark run settings.

    mode "exact" extracts from oracle field grids and supports only the
    reconstruct task; "neural" decodes trained models. The complete task
    recovers a fresh latent code from view-limited observations; the noise
    task perturbs the observed cloud by sigma and refines the trained code
    against it (sigma=0 runs the plain reconstruct path, so its output is
    identical by construction).
    """

    mode: str = "exact"
    resolution: int = 64
    n_chamfer: int = 30000
    resamplings: int = 3
    n_observations: int = 4096
    opt_iters: int = 100
    sigma: float = 0.0
    sigma_near: float = 0.05
    view: ViewSpec = field(default_factory=lambda: ViewSpec("V1"))
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "neural"):
            raise ValueError("mode must be 'exact' or 'neural'")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if min(self.n_chamfer, self.resamplings, self.n_observations) < 1:
            raise ValueError("counts must be >= 1")
        if self.opt_iters < 0 or self.sigma < 0 or self.sigma_near < 0:
            raise ValueError("opt_iters and sigmas must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class ChamferReport:
    """Per-representation benchmark outcome, Chamfer values x1000."""

    kind: FieldKind
    task: str
    per_shape: dict[str, float]
    failures: dict[str, str]
    n_points: int
    n_resamplings: int

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.per_shape.values())))

    @property
    def median(self) -> float:
        return float(np.median(list(self.per_shape.values())))


def _extract(kind: FieldKind, grid: FieldGrid) -> TriMesh:
    if kind == FieldKind.SDF:
        return extract_mesh_scalar(grid)
    if kind == FieldKind.UDF:
        g = gradient(grid)
        flipped = FieldGrid(
            FieldKind.VT, g.resolution, g.origin, g.spacing, -g.values
        )
        return extract_mesh_vector(flipped)
    return extract_mesh_vector(grid)


def _neural_grid(result: TrainResult, code: np.ndarray, config: BenchConfig) -> FieldGrid:
    return model_field_grid(result.model, code, config.resolution, raw=True)


def _trained_code(result: TrainResult, name: str) -> np.ndarray:
    if name not in result.codes:
        raise ValueError(f"no trained code for shape {name!r}")
    return result.codes[name]


def _reconstruct_neural(
    result: TrainResult, name: str, config: BenchConfig
) -> FieldGrid:
    return _neural_grid(result, _trained_code(result, name), config)


def _complete_neural(
    result: TrainResult,
    name: str,
    index: SpatialIndex,
    config: BenchConfig,
    seed: int,
) -> FieldGrid:
    obs = visible_observations(
        index, config.view, config.n_observations, result.config.kind,
        sigma_near=config.sigma_near, seed=seed,
    )
    code = optimize_latent(result.model, obs, iters=config.opt_iters, seed=seed)
    return _neural_grid(result, code, config)


def _noise_neural(
    result: TrainResult,
    name: str,
    index: SpatialIndex,
    config: BenchConfig,
    seed: int,
) -> FieldGrid:
    if config.sigma == 0:
        return _reconstruct_neural(result, name, config)
    kind = result.config.kind
    samples = sample_surface_points(index.mesh, config.n_observations, seed=seed)
    cloud = add_noise(samples, config.sigma, seed=seed + 1)
    rng = np.random.default_rng(seed + 2)
    positions = cloud + rng.normal(0.0, config.sigma_near, size=cloud.shape)
    targets = cloud_targets(cloud, kind, positions)
    code = optimize_latent(
        result.model, (positions, targets), iters=config.opt_iters,
        seed=seed, init=_trained_code(result, name),
    )
    return _neural_grid(result, code, config)


def _shape_grids(
    name: str,
    mesh: TriMesh,
    kinds: Sequence[FieldKind],
    models: Mapping[FieldKind, TrainResult] | None,
    task: str,
    config: BenchConfig,
    seed: int,
) -> dict[FieldKind, FieldGrid | Exception]:
    out: dict[FieldKind, FieldGrid | Exception] = {}
    if config.mode == "exact":
        index = SpatialIndex(mesh)
        todo = list(kinds)
        if FieldKind.SDF in todo and not index.is_watertight():
            out[FieldKind.SDF] = ValueError("sign undefined: mesh is not watertight")
            todo = [k for k in todo if k != FieldKind.SDF]
        if todo:
            # One shared closest-point pass for every remaining kind.
            out.update(sample_field_grids(index, todo, config.resolution))
        return out
    index = SpatialIndex(mesh) if task in ("complete", "noise") else None
    for kind in kinds:
        try:
            result = models[kind]
            if task == "reconstruct":
                out[kind] = _reconstruct_neural(result, name, config)
            elif task == "complete":
                out[kind] = _complete_neural(result, name, index, config, seed)
            else:
                out[kind] = _noise_neural(result, name, index, config, seed)
        except Exception as exc:  # recorded per shape, never fatal
            out[kind] = exc
    return out


def run_benchmark(
    shapes: Mapping[str, TriMesh] | Iterable[tuple[str, TriMesh]],
    representations: Sequence[FieldKind],
    task: str,
    config: BenchConfig = BenchConfig(),
    models: Mapping[FieldKind, TrainResult] | None = None,
) -> dict[FieldKind, ChamferReport]:
    """Evaluate representations over a shape set for one task.

    For every shape and representation: build the field grid (exact oracle
    or trained model per config.mode), extract the mesh (scalar cubes for
    SDF, vector cubes for VT/DVT and for the negated UDF gradient), and
    measure Chamfer x1000 against the reference mesh. Per-shape failures
    (open mesh asked for a sign, degenerate view, empty extraction ...) are
    recorded as +infinity with a message instead of aborting the run.

    Returns:
        One ChamferReport per representation, shapes sorted by name.
    """
    if task not in _TASKS:
        raise ValueError(f"task must be one of {_TASKS}")
    if config.mode == "exact" and task != "reconstruct":
        raise ValueError("exact mode supports only the reconstruct task")
    if config.mode == "neural":
        missing = [k.name for k in representations if not models or k not in models]
        if missing:
            raise ValueError(f"neural mode needs trained models for {missing}")
    pairs = shapes.items() if isinstance(shapes, Mapping) else shapes
    items = sorted(((str(n), m) for n, m in pairs), key=lambda it: it[0])
    if not items:
        raise ValueError("no shapes")

    def one_shape(args):
        pos, (name, mesh) = args
        seed = config.seed + 7919 * pos
        grids = _shape_grids(
            name, mesh, representations, models, task, config, seed
        )
        row: dict[FieldKind, tuple[float, str | None]] = {}
        for kind in representations:
            got = grids[kind]
            if isinstance(got, Exception):
                row[kind] = (float("inf"), str(got))
                continue
            try:
                extracted = _extract(kind, got)
                value = chamfer(
                    extracted, mesh, n=config.n_chamfer,
                    resamplings=config.resamplings, seed=config.seed,
                )
                flag = "empty mesh" if np.isinf(value) else None
                row[kind] = (value, flag)
            except Exception as exc:
                row[kind] = (float("inf"), str(exc))
        return name, row

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(one_shape, enumerate(items)))
    else:
        rows = [one_shape(a) for a in enumerate(items)]

    reports = {}
    for kind in representations:
        per_shape, failures = {}, {}
        for name, row in rows:
            value, flag = row[kind]
            per_shape[name] = value
            if flag is not None:
                failures[name] = flag
        reports[kind] = ChamferReport(
            kind=kind, task=task, per_shape=per_shape, failures=failures,
            n_points=config.n_chamfer, n_resamplings=config.resamplings,
        )
    return reports


def report_text(reports: Mapping[FieldKind, ChamferReport]) -> str:
    """Plain-text table: one row per shape, one column per representation,
    mean/median footer. Failed entries show 'failed'."""
    kinds = list(reports)
    if not kinds:
        return "(empty report)\n"
    first = reports[kinds[0]]
    names = sorted(first.per_shape)
    width = max([len(n) for n in names] + [8])
    out = StringIO()
    out.write(f"task: {first.task}  chamfer x1000, {first.n_points} points, "
              f"{first.n_resamplings} resamplings\n")
    header = "shape".ljust(width) + "".join(k.name.rjust(12) for k in kinds)
    out.write(header + "\n")
    out.write("-" * len(header) + "\n")

    def cell(report, name):
        if name in report.failures:
            return "failed".rjust(12)
        return f"{report.per_shape[name]:12.4f}"

    for name in names:
        out.write(name.ljust(width))
        out.write("".join(cell(reports[k], name) for k in kinds))
        out.write("\n")
    for label, agg in (("mean", "mean"), ("median", "median")):
        out.write(label.ljust(width))
        out.write("".join(f"{getattr(reports[k], agg):12.4f}" for k in kinds))
        out.write("\n")
    for kind in kinds:
        for name, msg in sorted(reports[kind].failures.items()):
            out.write(f"note: {kind.name}/{name} failed: {msg}\n")
    return out.getvalue()


def report_csv(reports: Mapping[FieldKind, ChamferReport]) -> str:
    """CSV rows per shape and representation, sorted by shape then
    representation, with aggregate rows appended."""
    lines = ["task,representation,shape,chamfer_x1000,failed"]
    kinds = list(reports)
    names = sorted(reports[kinds[0]].per_shape) if kinds else []
    for name in names:
        for kind in kinds:
            rep = reports[kind]
            failed = int(name in rep.failures)
            lines.append(
                f"{rep.task},{kind.name},{name},{rep.per_shape[name]:.6f},{failed}"
            )
    for kind in kinds:
        rep = reports[kind]
        lines.append(f"{rep.task},{kind.name},(mean),{rep.mean:.6f},0")
        lines.append(f"{rep.task},{kind.name},(median),{rep.median:.6f},0")
    return "\n".join(lines) + "\n"
