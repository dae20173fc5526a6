"""Command-line interface: ``refractsurf <subcommand> ...``.

Exit codes: 0 success, 1 IO or file-format error, 2 usage or configuration
error, 3 grid mismatch, 4 geometry or scene error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from refractsurf import io
from refractsurf.benchmark import DEFAULT_FRAMES, parse_frames, run_benchmark
from refractsurf.errors import (
    ConfigError,
    DegenerateSceneError,
    FormatError,
    GeometryError,
    InvalidInputError,
    RefractError,
)
from refractsurf.maps import DepthMap
from refractsurf.metrics import normal_angles, rmse_depth, zero_mean_normalize
from refractsurf.reconstruction.landscape import TwoPointSetup, energy_grid_2pt, grid_argmin
from refractsurf.reconstruction.solver import SolverOptions, parse_init, reconstruct
from refractsurf.scenes import load_scene_config, parse_key_values
from refractsurf.tracer import generate, synthesize_flow

logger = logging.getLogger("refractsurf")

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_MISMATCH, EXIT_GEOMETRY = 0, 1, 2, 3, 4

ENERGY_GRID_KEYS = ("truth.d1", "truth.d2", "background.z", "media.mu", "rays.slope", "penalty.tir")


class GridMismatch(RefractError):
    pass


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return p


def _out_prefix(prefix: str) -> Path:
    p = Path(prefix)
    if p.parent and not p.parent.exists():
        raise FileNotFoundError(f"output directory does not exist: {p.parent}")
    return p


def _sibling(prefix: Path, suffix: str) -> Path:
    return prefix.with_name(prefix.name + suffix)


def _solver_options(args, scheme: str, depth: float | None) -> SolverOptions:
    opts = SolverOptions(init_scheme=scheme, init_depth=depth if depth is not None else 2.0)
    overrides = {k: getattr(args, k) for k in ("max_iterations", "energy_tolerance",
                                               "gradient_tolerance", "lbfgs_memory", "tir_penalty")
                 if getattr(args, k, None) is not None}
    return replace(opts, **overrides)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    scene = load_scene_config(_require_file(args.config))
    if args.seed is not None or args.noise_std is not None:
        scene = replace(scene,
                        seed=args.seed if args.seed is not None else scene.seed,
                        noise_std=args.noise_std if args.noise_std is not None else scene.noise_std)
    prefix = _out_prefix(args.out)
    corr, truth = generate(scene)
    io.write_rfrc(_sibling(prefix, ".rfrc"), corr)
    io.write_depth(_sibling(prefix, ".gt_depth.rfdm"), truth.depth)
    io.write_normals(_sibling(prefix, ".gt_normals.rfdm"), truth.normals)
    if args.flow:
        flow = synthesize_flow(corr)
        rows = [[r, c, float(flow[r, c, 0]), float(flow[r, c, 1])]
                for r in range(flow.shape[0]) for c in range(flow.shape[1])]
        io.write_csv(_sibling(prefix, ".flow.csv"), ["row", "col", "du", "dv"], rows)
        io.write_ppm(_sibling(prefix, ".flow.ppm"), io.flow_to_rgb(flow, corr.valid))
    print(f"generated {corr.shape[0]}x{corr.shape[1]} correspondences "
          f"({corr.n_valid} valid) -> {prefix}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    corr = io.read_rfrc(_require_file(args.input))
    scheme, depth = parse_init(args.init)
    opts = _solver_options(args, scheme, depth)
    prev = None
    if args.prev:
        z = io.read_z(_require_file(args.prev))
        if z.shape != corr.shape:
            raise GridMismatch(f"previous depth map is {z.shape}, correspondences are {corr.shape}")
        prev = DepthMap.from_z(corr.camera, z)
    prefix = _out_prefix(args.out)
    result = reconstruct(corr, opts, prev)
    io.write_depth(_sibling(prefix, ".est_depth.rfdm"), result.depth)
    io.write_normals(_sibling(prefix, ".est_normals.rfdm"), result.normals)
    io.write_csv(_sibling(prefix, ".iters.csv"),
                 ["iteration", "energy", "grad_inf_norm", "step_length"],
                 [[h.iteration, h.energy, h.grad_inf_norm, h.step_length] for h in result.history])
    print(f"final_energy={io.format_float(result.final_energy)} "
          f"converged={str(result.converged).lower()} iterations={result.iterations}")
    return EXIT_OK


def _normals_path(depth_path: Path, explicit: str | None) -> Path | None:
    if explicit:
        return _require_file(explicit)
    name = depth_path.name
    if "depth" not in name:
        return None
    head, _, tail = name.rpartition("depth")
    candidate = depth_path.with_name(head + "normals" + tail)
    return candidate if candidate.is_file() else None


def cmd_evaluate(args) -> int:
    est_path, gt_path = _require_file(args.est), _require_file(args.gt)
    est_z, gt_z = io.read_z(est_path), io.read_z(gt_path)
    if est_z.shape != gt_z.shape:
        raise GridMismatch(f"estimate is {est_z.shape}, ground truth is {gt_z.shape}")
    if args.ortho:
        est_z, gt_z = zero_mean_normalize(est_z), zero_mean_normalize(gt_z)
    rmse = rmse_depth(est_z, gt_z)

    mae, excluded = float("nan"), int(np.sum(~(np.isfinite(est_z) & np.isfinite(gt_z))))
    est_n_path = _normals_path(est_path, args.est_normals)
    gt_n_path = _normals_path(gt_path, args.gt_normals)
    if est_n_path and gt_n_path:
        est_n, gt_n = io.read_normals(est_n_path), io.read_normals(gt_n_path)
        if est_n.shape != est_z.shape or gt_n.shape != gt_z.shape:
            raise GridMismatch("normal maps do not match the depth grid")
        angles, excluded = normal_angles(est_n, gt_n)
        mae = float(np.mean(angles))
    print(f"RMSE={io.format_float(rmse)} MAE_deg={io.format_float(mae)} excluded={excluded}")

    if args.csv:
        io.write_csv(args.csv, ["t", "rmse", "mae_deg", "energy", "iterations", "excluded_pixels"],
                     [[int(args.t) if args.t.is_integer() else args.t, rmse, mae, float("nan"), 0, excluded]])
    if args.heatmap:
        err = np.abs(est_z - gt_z)
        finite = np.isfinite(err)
        top = float(err[finite].max()) if finite.any() else 0.0
        io.write_pgm(args.heatmap, err, lo=0.0, hi=top)
        Path(str(args.heatmap) + ".txt").write_text(
            f"max_abs_error = {io.format_float(top)}\nscale = linear, black 0, white max\n",
            encoding="utf-8")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    template = load_scene_config(_require_file(args.config))
    frames = parse_frames(args.frames) if args.frames else list(DEFAULT_FRAMES)
    scheme, depth = parse_init(args.init)
    opts = _solver_options(args, scheme, depth)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def save_heatmap(metrics, result, truth):
        z_est = np.where(result.depth.valid, result.depth.z, np.nan)
        z_gt = np.where(truth.depth.valid, truth.depth.z, np.nan)
        if template.camera.mode == "orthographic":
            z_est, z_gt = zero_mean_normalize(z_est), zero_mean_normalize(z_gt)
        err = np.abs(z_est - z_gt)
        top = float(np.nanmax(err)) if np.isfinite(err).any() else 0.0
        path = out / f"heatmap_t{int(metrics.frame_t):03d}.pgm"
        io.write_pgm(path, err, lo=0.0, hi=top)
        Path(str(path) + ".txt").write_text(f"max_abs_error = {io.format_float(top)}\n",
                                            encoding="utf-8")

    report = run_benchmark(template, frames, opts, on_frame=save_heatmap if args.heatmaps else None)
    report.write_csv(out / "benchmark.csv")
    summary = report.summary()
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return EXIT_OK


def _parse_range(text: str, name: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"--{name}: expected lo:hi:n, got {text!r}") from None
    if n < 1 or hi < lo or (n > 1 and hi == lo):
        raise ConfigError(f"--{name}: empty range {text!r}")
    return np.linspace(lo, hi, n)


def _two_point_setup(args) -> TwoPointSetup:
    values = {}
    if args.config:
        values = parse_key_values(_require_file(args.config).read_text(encoding="utf-8"),
                                  ENERGY_GRID_KEYS)

    def num(key, flag, default):
        if getattr(args, flag) is not None:
            return getattr(args, flag)
        if key in values:
            try:
                return float(values[key])
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {values[key]!r}") from None
        return default

    base = TwoPointSetup()
    truth = (num("truth.d1", "gt_d1", base.truth[0]), num("truth.d2", "gt_d2", base.truth[1]))
    try:
        return TwoPointSetup(truth, num("background.z", "background_z", base.background_z),
                             num("media.mu", "mu", base.mu), num("rays.slope", "ray_slope", base.ray_slope),
                             num("penalty.tir", "tir_penalty", base.tir_penalty))
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_energy_grid(args) -> int:
    setup = _two_point_setup(args)
    d1 = _parse_range(args.d1, "d1")
    d2 = _parse_range(args.d2, "d2")
    prefix = _out_prefix(args.out)
    grid = energy_grid_2pt(d1, d2, setup)
    rows = [[float(a)] + [float(v) for v in grid[i]] for i, a in enumerate(d1)]
    io.write_csv(_sibling(prefix, ".csv"), ["d1\\d2"] + [io.format_float(b) for b in d2], rows)
    io.write_pgm(_sibling(prefix, ".pgm"), grid)
    a, b = grid_argmin(grid, d1, d2)
    print(f"argmin d1={io.format_float(a)} d2={io.format_float(b)} "
          f"log10_energy={io.format_float(float(grid.min()))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--init", default="flat", help="flat | sequential | fixed:<z>")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--energy-tolerance", type=float)
    p.add_argument("--gradient-tolerance", type=float)
    p.add_argument("--lbfgs-memory", type=int)
    p.add_argument("--tir-penalty", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="refractsurf",
                                     description="Refractive surface reconstruction toolkit.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="trace a synthetic scene")
    p.add_argument("config")
    p.add_argument("out", help="output prefix")
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--flow", action="store_true", help="also write flow CSV and color image")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("reconstruct", help="recover depth from correspondences")
    p.add_argument("input", help=".rfrc file")
    p.add_argument("out", help="output prefix")
    p.add_argument("--prev", help="previous frame depth (.rfdm) for --init sequential")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="compare an estimate with ground truth")
    p.add_argument("est", help="estimated depth .rfdm")
    p.add_argument("gt", help="ground-truth depth .rfdm")
    p.add_argument("--est-normals")
    p.add_argument("--gt-normals")
    p.add_argument("--ortho", action="store_true", help="zero-mean normalize both depth maps")
    p.add_argument("--csv")
    p.add_argument("--heatmap", help="PGM of per-pixel |z_est - z_gt|")
    p.add_argument("--t", type=float, default=0.0, help="frame time written to --csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="generate, reconstruct and score a frame sequence")
    p.add_argument("config", help="scene template")
    p.add_argument("out", help="output directory")
    p.add_argument("--frames", help="comma list, a-b ranges or 'all'")
    p.add_argument("--heatmaps", action="store_true")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("energy-grid", help="two-point energy landscape")
    p.add_argument("out", help="output prefix")
    p.add_argument("--config")
    p.add_argument("--d1", default="1.0:2.9:101", help="lo:hi:n")
    p.add_argument("--d2", default="1.0:2.9:101", help="lo:hi:n")
    p.add_argument("--gt-d1", type=float)
    p.add_argument("--gt-d2", type=float)
    p.add_argument("--background-z", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--ray-slope", type=float)
    p.add_argument("--tir-penalty", type=float)
    p.set_defaults(func=cmd_energy_grid)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GridMismatch as exc:
        print(f"error: grid mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeometryError, DegenerateSceneError, RefractError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY


if __name__ == "__main__":
    sys.exit(main())
