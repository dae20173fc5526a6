"""Frame-wise benchmark harness: generate -> reconstruct -> metrics."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from refractsurf.errors import RefractError
from refractsurf.io import format_float, write_csv
from refractsurf.maps import CorrespondenceMap
from refractsurf.metrics import normal_angles, rmse_depth, zero_mean_normalize
from refractsurf.reconstruction.energy import LightPathEnergy
from refractsurf.reconstruction.solver import (
    ReconstructionResult,
    SolverOptions,
    plane_depths,
    reconstruct,
)
from refractsurf.scenes import N_FRAMES, SceneSpec
from refractsurf.tracer import GroundTruth, generate

logger = logging.getLogger(__name__)

DEFAULT_FRAMES = (0, 25, 50, 75, 99)
CSV_HEADER = ["t", "rmse", "mae_deg", "energy", "iterations", "excluded_pixels"]


@dataclass
class FrameMetrics:
    frame_t: float
    rmse_depth: float = math.nan
    mae_normals_deg: float = math.nan
    energy_final: float = math.nan
    iterations: int = 0
    excluded_pixels: int = 0
    converged: bool = False
    degenerate: bool = False
    error: str | None = None

    def csv_row(self) -> list:
        t = int(self.frame_t) if float(self.frame_t).is_integer() else self.frame_t
        return [t, float(self.rmse_depth), float(self.mae_normals_deg), float(self.energy_final),
                self.iterations, self.excluded_pixels]


@dataclass
class BenchmarkReport:
    scene: str
    init_scheme: str
    frames: list[FrameMetrics] = field(default_factory=list)

    def _mean(self, name: str) -> float:
        vals = [getattr(f, name) for f in self.frames if f.error is None]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def mean_rmse(self) -> float:
        return self._mean("rmse_depth")

    @property
    def mean_mae(self) -> float:
        return self._mean("mae_normals_deg")

    @property
    def failures(self) -> list[FrameMetrics]:
        return [f for f in self.frames if f.error is not None]

    @property
    def degenerate(self) -> bool:
        return any(f.degenerate for f in self.frames)

    def write_csv(self, path: str | Path) -> None:
        write_csv(path, CSV_HEADER, [f.csv_row() for f in self.frames])

    def summary(self) -> str:
        lines = [
            f"scene: {self.scene}",
            f"init: {self.init_scheme}",
            f"frames: {len(self.frames)} ({len(self.failures)} failed)",
            f"mean_rmse: {format_float(self.mean_rmse)}",
            f"mean_mae_deg: {format_float(self.mean_mae)}",
        ]
        if self.degenerate:
            lines.append("warning: degenerate energy (identical media); depth is not observable")
        for f in self.failures:
            lines.append(f"failed t={f.frame_t}: {f.error}")
        return "\n".join(lines) + "\n"


def thread_count() -> int:
    """Worker threads from REFRACT_THREADS (unset or 0 = one per CPU)."""
    raw = os.environ.get("REFRACT_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer REFRACT_THREADS=%r", raw)
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def energy_is_degenerate(corr: CorrespondenceMap, opts: SolverOptions) -> bool:
    """True when two distinct fronto-parallel planes both explain the data exactly."""
    model = LightPathEnergy(corr, opts.tir_penalty)
    zb = float(np.min(corr.xb[corr.valid][:, 2]))
    return all(model(plane_depths(corr, c)) <= 1e-9 for c in (0.5 * zb, 0.9 * zb))


def evaluate_frame(t: float, result: ReconstructionResult, truth: GroundTruth,
                   orthographic: bool) -> FrameMetrics:
    est, gt = result.depth, truth.depth
    if orthographic:
        est_z, gt_z = zero_mean_normalize(est, False), zero_mean_normalize(gt, False)
        rmse = rmse_depth(est_z, gt_z)
    else:
        rmse = rmse_depth(est, gt)
    angles, excluded = normal_angles(result.normals, truth.normals)
    return FrameMetrics(t, rmse, float(np.mean(angles)), result.final_energy,
                        result.iterations, excluded, result.converged)


def _run_frame(scene: SceneSpec, t: float, opts: SolverOptions, prev=None):
    corr, truth = generate(scene.at_time(t))
    result = reconstruct(corr, opts, prev)
    metrics = evaluate_frame(t, result, truth, scene.camera.mode == "orthographic")
    metrics.degenerate = energy_is_degenerate(corr, opts)
    return metrics, result, truth


def run_benchmark(template: SceneSpec, t_list=DEFAULT_FRAMES, opts: SolverOptions | None = None,
                  threads: int | None = None, on_frame=None) -> BenchmarkReport:
    """Reconstruct each frame ``t`` of ``template`` and score it against ground truth.

    Frames are processed in ascending ``t``.  Sequential initialization threads
    the previous estimate through (serially); other schemes run frames on up to
    ``threads`` worker threads.  Results do not depend on the thread count.
    Per-frame failures are recorded in the report instead of raised.

    ``on_frame(metrics, result, truth)`` is called for every successful frame
    in ascending order.
    """
    opts = opts or SolverOptions()
    frames = sorted({float(t) for t in t_list})
    if not frames:
        raise ValueError("no frames requested")
    threads = thread_count() if threads is None else max(1, threads)
    desc = (f"{template.surface.kind}/{template.background.kind}/{template.camera.mode}"
            f" {template.camera.height}x{template.camera.width} mu={template.media.mu:.6g}")
    init_desc = opts.init_scheme + (f":{opts.init_depth:g}" if opts.init_scheme == "fixed" else "")
    report = BenchmarkReport(desc, init_desc)

    def guarded(t, prev=None):
        logger.info("processing frame t=%g", t)
        try:
            return _run_frame(template, t, opts, prev)
        except (RefractError, ValueError, ArithmeticError) as exc:
            logger.warning("frame t=%g failed: %s", t, exc)
            return FrameMetrics(t, error=str(exc)), None, None

    if opts.init_scheme == "sequential":
        outcomes = []
        prev = None
        for t in frames:
            outcome = guarded(t, prev)
            prev = outcome[1].depth if outcome[1] is not None else None
            outcomes.append(outcome)
    elif threads == 1 or len(frames) == 1:
        outcomes = [guarded(t) for t in frames]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(guarded, frames))

    for metrics, result, truth in outcomes:
        report.frames.append(metrics)
        if on_frame is not None and result is not None:
            on_frame(metrics, result, truth)
    return report


def parse_frames(spec: str) -> list[float]:
    """``all`` or a comma-separated list of frame times (``a-b`` ranges allowed)."""
    spec = spec.strip()
    if spec == "all":
        return [float(t) for t in range(N_FRAMES)]
    out: list[float] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(float(t) for t in range(int(a), int(b) + 1))
        else:
            out.append(float(part))
    if not out:
        raise ValueError(f"no frames in {spec!r}")
    return out


def with_init(opts: SolverOptions, scheme: str, depth: float | None) -> SolverOptions:
    return replace(opts, init_scheme=scheme, init_depth=depth if depth is not None else opts.init_depth)
