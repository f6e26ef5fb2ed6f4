"""Command-line entry point tying the pipeline together for batch use.

Subcommands: ``field`` (oracle field grid from a mesh file), ``extract``
(mesh from a saved grid), ``fit`` (auto-decoder training on procedural
shapes), ``complete`` (single-view latent completion), ``eval`` (benchmark
report). Every run echoes its parsed configuration, takes every seed from
the command line, and writes byte-identical outputs on reruns.

Exit codes: 0 success, 1 internal error, 2 user-input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

import numpy as np

from .eval_bench import BenchConfig, ViewSpec, chamfer, report_csv, report_text, run_benchmark, visible_observations
from .field_oracle import FieldGrid, FieldKind, load_field_grid, sample_field_grids, save_field_grid
from .geometry import SpatialIndex
from .grid_ops import DIV_THRESHOLD_DEFAULT, divergence, normalize_vectors, surface_cells
from .mcvector import extract_mesh_scalar, extract_mesh_vector
from .meshio import load_mesh, save_obj
from .neural_fit import TrainResult, desk_preset, load_model, model_field_grid, optimize_latent, save_model, train
from .shapes import make_shape

_KINDS = {"vt": FieldKind.VT, "dvt": FieldKind.DVT, "sdf": FieldKind.SDF, "udf": FieldKind.UDF}
_RES_MIN, _RES_MAX = 2, 512
THREADS_ENV = "VECSURF_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _echo(args: argparse.Namespace) -> str:
    """One-line configuration snapshot printed at the top of every run."""
    skip = {"func"}
    pairs = sorted(
        (k, v) for k, v in vars(args).items() if k not in skip and v is not None
    )
    body = " ".join(f"{k.replace('_', '-')}={v}" for k, v in pairs)
    return f"config: {body}"


def _check_res(res: int) -> int:
    if not _RES_MIN <= res <= _RES_MAX:
        raise ValueError(f"--res must be in [{_RES_MIN}, {_RES_MAX}], got {res}")
    return res


def _require_shapes(names: list[str]) -> dict[str, object]:
    if not names:
        raise ValueError("at least one shape is required")
    return {name: make_shape(name) for name in names}


def cmd_field(args: argparse.Namespace) -> int:
    """Sample an exact oracle field of a mesh file onto a grid file."""
    print(_echo(args))
    res = _check_res(args.res)
    kind = _KINDS[args.kind]
    mesh = load_mesh(args.mesh)
    index = SpatialIndex(mesh)
    grid = sample_field_grids(index, [kind], res)[kind]
    save_field_grid(args.out, grid)
    mag = np.linalg.norm(grid.values, axis=1) if grid.is_vector else grid.values
    print(f"field: kind={kind.name} resolution={res}^3 values={grid.n_values}")
    print(f"stats: min={mag.min():.9g} max={mag.max():.9g} mean={mag.mean():.9g}")
    print(f"wrote {args.out}")
    return 0


def _active_cell_count(grid: FieldGrid, threshold: float | None) -> tuple[int, float]:
    """Count of cells the detection step flags, plus the threshold used."""
    if grid.is_vector:
        t = DIV_THRESHOLD_DEFAULT if threshold is None else threshold
        cells = surface_cells(divergence(normalize_vectors(grid)), t)
        return int(cells.mask.sum()), t
    t = 0.0 if threshold is None else threshold
    lo = hi = grid.values_zyx()
    for axis in range(3):
        head = [slice(None)] * 3
        tail = [slice(None)] * 3
        head[axis] = slice(0, -1)
        tail[axis] = slice(1, None)
        lo = np.minimum(lo[tuple(head)], lo[tuple(tail)])
        hi = np.maximum(hi[tuple(head)], hi[tuple(tail)])
    return int(np.count_nonzero((lo < t) & (hi > t))), t


def cmd_extract(args: argparse.Namespace) -> int:
    """Extract a mesh from a saved grid, path chosen by the grid kind."""
    print(_echo(args))
    grid = load_field_grid(args.grid)
    n_active, t = _active_cell_count(grid, args.threshold)
    if grid.is_vector:
        mesh = extract_mesh_vector(grid, threshold=t)
        path_name = "vector"
    else:
        mesh = extract_mesh_scalar(grid, iso=t)
        path_name = "scalar"
    save_obj(args.out, mesh, header_lines=[_echo(args)])
    print(f"extract: path={path_name} kind={grid.kind.name}")
    print(f"active cells: {n_active}")
    print(f"faces: {mesh.n_triangles}")
    print(f"wrote {args.out}")
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    """Train the auto-decoder on procedural shapes and save a checkpoint."""
    print(_echo(args))
    kind = _KINDS[args.kind]
    shapes = _require_shapes(args.shapes)
    config = desk_preset(kind, seed=args.seed)
    overrides = {
        "epochs": args.epochs,
        "points_per_batch": args.points_per_batch,
        "shapes_per_batch": args.shapes_per_batch,
        "coord_scale": args.coord_scale,
        "lr_net": args.lr_net,
        "lr_codes": args.lr_codes,
        "latent_dim": args.latent_dim,
    }
    set_overrides = {k: v for k, v in overrides.items() if v is not None}
    if set_overrides:
        config = dataclasses.replace(config, **set_overrides)
    result = train(shapes, config)
    save_model(args.out, result.model, result.codes)
    trace_path = args.trace or str(Path(args.out).with_suffix(".loss.txt"))
    Path(trace_path).write_text(
        "\n".join(f"{v:.9g}" for v in result.loss_trace) + "\n"
    )
    first = result.loss_trace[:50].mean()
    last = result.loss_trace[-50:].mean()
    print(f"fit: kind={kind.name} shapes={len(shapes)} epochs={config.epochs}")
    print(f"loss: initial={first:.9g} final={last:.9g}")
    print(f"wrote {args.out}")
    print(f"wrote {trace_path}")
    return 0


def cmd_complete(args: argparse.Namespace) -> int:
    """Optimize a fresh latent against one view and extract the mesh."""
    print(_echo(args))
    res = _check_res(args.res)
    model, _ = load_model(args.model)
    mesh_ref = make_shape(args.shape)
    index = SpatialIndex(mesh_ref)
    view = ViewSpec(args.view)
    observations = visible_observations(
        index, view, args.n_obs, model.kind,
        sigma_near=args.sigma_near, seed=args.seed,
    )
    code = optimize_latent(model, observations, iters=args.iters, seed=args.seed)
    grid = model_field_grid(model, code, res, raw=True)
    if grid.is_vector:
        mesh = extract_mesh_vector(grid)
    else:
        mesh = extract_mesh_scalar(grid)
    save_obj(args.out, mesh, header_lines=[_echo(args)])
    cd = chamfer(mesh, mesh_ref, n=args.n_chamfer, seed=args.seed)
    print(f"complete: shape={args.shape} view={view.view_id} kind={model.kind.name}")
    print(f"faces: {mesh.n_triangles}")
    print(f"chamfer_x1000: {cd:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    """Run the benchmark over shapes and representations, print the report."""
    print(_echo(args))
    res = _check_res(args.res)
    shapes = _require_shapes(args.shapes)
    kinds = [_KINDS[k] for k in args.kinds]
    models = None
    if args.mode == "neural":
        models = {}
        for spec_item in args.model or []:
            name, _, path = spec_item.partition("=")
            if name not in _KINDS or not path:
                raise ValueError(f"--model expects kind=path, got {spec_item!r}")
            model, codes = load_model(path)
            models[_KINDS[name]] = TrainResult(
                model=model, codes=codes,
                loss_trace=np.zeros(0), config=desk_preset(model.kind),
            )
    config = BenchConfig(
        mode=args.mode, resolution=res, n_chamfer=args.n_chamfer,
        resamplings=args.resamplings, n_observations=args.n_obs,
        opt_iters=args.opt_iters, sigma=args.sigma, view=ViewSpec(args.view),
        seed=args.seed, threads=args.threads,
    )
    reports = run_benchmark(shapes, kinds, args.task, config, models=models)
    print(report_text(reports))
    if args.csv:
        Path(args.csv).write_text(report_csv(reports))
        print(f"wrote {args.csv}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Construct the argument parser for all subcommands."""
    parser = argparse.ArgumentParser(
        prog="vecsurf",
        description="Vector-field implicit surfaces: oracle fields, "
        "divergence-based extraction, auto-decoder fitting, benchmarks.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("field", help="sample an exact field grid from a mesh file")
    p.add_argument("mesh", help="input mesh file (OBJ or PLY)")
    p.add_argument("--kind", required=True, choices=sorted(_KINDS),
                   help="field to sample")
    p.add_argument("--res", type=int, default=64,
                   help=f"grid resolution per axis, in [{_RES_MIN}, {_RES_MAX}]")
    p.add_argument("--out", required=True, help="output grid file")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("extract", help="extract a mesh from a saved field grid")
    p.add_argument("grid", help="input grid file")
    p.add_argument("--threshold", type=float, default=None,
                   help="divergence cutoff (vector grids) or iso level "
                   "(scalar grids); defaults -1.5 / 0.0")
    p.add_argument("--out", required=True, help="output OBJ file")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", help="train the auto-decoder on procedural shapes")
    p.add_argument("--shapes", nargs="+", required=True,
                   help="procedural shape names (e.g. sphere torus box)")
    p.add_argument("--kind", required=True, choices=sorted(_KINDS),
                   help="field representation to fit")
    p.add_argument("--out", required=True, help="output checkpoint file")
    p.add_argument("--trace", default=None,
                   help="loss trace text file (default: checkpoint with .loss.txt)")
    p.add_argument("--epochs", type=int, default=None, help="training steps")
    p.add_argument("--points-per-batch", type=int, default=None)
    p.add_argument("--shapes-per-batch", type=int, default=None)
    p.add_argument("--coord-scale", type=float, default=None)
    p.add_argument("--lr-net", type=float, default=None)
    p.add_argument("--lr-codes", type=float, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("complete", help="single-view completion with a checkpoint")
    p.add_argument("--model", required=True, help="checkpoint from fit")
    p.add_argument("--shape", required=True, help="procedural shape name")
    p.add_argument("--view", default="V1", help="viewpoint id V1..V8")
    p.add_argument("--iters", type=int, default=100, help="latent steps")
    p.add_argument("--n-obs", type=int, default=4096,
                   help="surface observations sampled before occlusion")
    p.add_argument("--sigma-near", type=float, default=0.05,
                   help="observation jitter std")
    p.add_argument("--res", type=int, default=64, help="extraction resolution")
    p.add_argument("--n-chamfer", type=int, default=30000,
                   help="points for the printed Chamfer")
    p.add_argument("--out", required=True, help="output OBJ file")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval", help="benchmark representations over shapes")
    p.add_argument("--task", required=True,
                   choices=["reconstruct", "complete", "noise"])
    p.add_argument("--shapes", nargs="*", default=[],
                   help="procedural shape names")
    p.add_argument("--kinds", nargs="+", required=True, choices=sorted(_KINDS))
    p.add_argument("--mode", default="exact", choices=["exact", "neural"])
    p.add_argument("--model", action="append", default=None,
                   metavar="KIND=PATH",
                   help="checkpoint per kind for neural mode (repeatable)")
    p.add_argument("--res", type=int, default=64, help="grid resolution")
    p.add_argument("--n-chamfer", type=int, default=30000)
    p.add_argument("--resamplings", type=int, default=3)
    p.add_argument("--n-obs", type=int, default=4096)
    p.add_argument("--opt-iters", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.0,
                   help="cloud noise std for the noise task")
    p.add_argument("--view", default="V1", help="viewpoint for completion")
    p.add_argument("--csv", default=None, help="also write the CSV report here")
    p.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker cap (default from ${THREADS_ENV} or 1)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure, distinct exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
