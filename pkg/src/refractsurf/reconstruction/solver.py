"""Flat-plane initialization and the full-surface L-BFGS solve."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from refractsurf.errors import (
    DegenerateEnergyWarning,
    HeightAmbiguityWarning,
    InvalidInputError,
)
from refractsurf.maps import CorrespondenceMap, DepthMap, NormalField
from refractsurf.reconstruction.energy import LightPathEnergy, estimate_normals
from refractsurf.reconstruction.lbfgs import IterationRecord, lbfgs_minimize

logger = logging.getLogger(__name__)

INIT_SCHEMES = ("independent_flat", "sequential", "fixed")

MIN_PLANE_DEPTH = 0.1
PLANE_SCAN_SAMPLES = 64
GOLDEN_TOLERANCE = 1e-7
INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules, memory and initialization of the reconstruction.

    ``init_depth`` is the z-depth of the constant initial plane used by the
    ``fixed`` scheme.
    """

    max_iterations: int = 500
    energy_tolerance: float = 1e-9
    gradient_tolerance: float = 1e-7
    lbfgs_memory: int = 10
    tir_penalty: float = 10.0
    init_scheme: str = "independent_flat"
    init_depth: float = 2.0

    def __post_init__(self) -> None:
        if self.init_scheme not in INIT_SCHEMES:
            raise InvalidInputError(f"unknown init scheme {self.init_scheme!r}")
        for name in ("max_iterations", "energy_tolerance", "gradient_tolerance",
                     "lbfgs_memory", "tir_penalty", "init_depth"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")


def parse_init(spec: str) -> tuple[str, float | None]:
    """Parse a CLI init string: ``flat``, ``independent``, ``sequential`` or ``fixed:<z>``."""
    spec = spec.strip()
    if spec in ("flat", "independent", "independent_flat"):
        return "independent_flat", None
    if spec in ("sequential", "seq"):
        return "sequential", None
    if spec.startswith("fixed:"):
        try:
            value = float(spec.split(":", 1)[1])
        except ValueError:
            raise InvalidInputError(f"bad fixed init depth in {spec!r}") from None
        if not value > 0:
            raise InvalidInputError("fixed init depth must be positive")
        return "fixed", value
    raise InvalidInputError(f"unknown init scheme {spec!r}")


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    depth: DepthMap
    normals: NormalField
    final_energy: float
    iterations: int
    converged: bool
    initial_energy: float = np.nan
    initial_depth: DepthMap | None = None
    message: str = ""
    history: list[IterationRecord] = field(default_factory=list)


def plane_depths(corr: CorrespondenceMap, c: float) -> np.ndarray:
    """Depths (valid pixels, row-major) placing every point on the plane z = c."""
    origins, dirs = corr.camera.rays()
    return ((c - origins[..., 2]) / dirs[..., 2])[corr.valid]


def _golden_section(f, lo: float, hi: float, tol: float = GOLDEN_TOLERANCE) -> float:
    a, b = lo, hi
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def init_flat(corr: CorrespondenceMap, opts: SolverOptions | None = None,
              model: LightPathEnergy | None = None) -> float:
    """Depth ``c`` of the fronto-parallel plane with the lowest energy.

    The energy of planes in ``(0.1, min z_B)`` is scanned on a uniform grid and
    the best sample's bracket refined by golden-section search.  If the energy
    does not vary with ``c`` (identical media, or any orthographic view) the
    lower bound is returned with a :class:`DegenerateEnergyWarning`.
    """
    opts = opts or SolverOptions()
    if corr.n_valid == 0:
        raise InvalidInputError("correspondence map has no valid pixels")
    if corr.camera.mode == "orthographic":
        warnings.warn("plane depth is not observable under orthographic projection",
                      HeightAmbiguityWarning, stacklevel=2)
    model = model or LightPathEnergy(corr, opts.tir_penalty)
    hi = float(np.min(corr.xb[corr.valid][:, 2]))
    lo = MIN_PLANE_DEPTH
    if hi <= lo:
        raise InvalidInputError("background is closer than the minimum plane depth")

    def plane_energy(c: float) -> float:
        return model(plane_depths(corr, c))

    grid = np.linspace(lo, hi, PLANE_SCAN_SAMPLES + 2)[1:-1]
    values = np.array([plane_energy(c) for c in grid])
    if np.ptp(values) <= 1e-9:
        warnings.warn("energy does not vary with plane depth; returning the lower bound",
                      DegenerateEnergyWarning, stacklevel=2)
        return lo
    k = int(np.argmin(values))
    a = grid[k - 1] if k > 0 else lo
    b = grid[k + 1] if k + 1 < grid.size else hi
    c = _golden_section(plane_energy, a, b)
    logger.debug("flat init c* = %.6f (E = %.6g)", c, plane_energy(c))
    return float(c)


def reconstruct(corr: CorrespondenceMap, opts: SolverOptions | None = None,
                prev: DepthMap | None = None) -> ReconstructionResult:
    """Recover the depth map whose refracted light paths pass through ``corr.xb``.

    ``prev`` seeds the ``sequential`` scheme; without it (first frame) the
    flat-plane initializer is used.
    """
    opts = opts or SolverOptions()
    if corr.n_valid == 0:
        raise InvalidInputError("correspondence map has no valid pixels")
    model = LightPathEnergy(corr, opts.tir_penalty)

    if opts.init_scheme == "fixed":
        d0 = plane_depths(corr, opts.init_depth)
    elif opts.init_scheme == "sequential" and prev is not None:
        if prev.shape != corr.shape:
            raise InvalidInputError("previous depth map grid does not match")
        d0 = np.where(prev.valid, prev.d, np.nan)[corr.valid]
        missing = ~np.isfinite(d0)
        if missing.any():
            d0[missing] = plane_depths(corr, init_flat(corr, opts, model))[missing]
    else:
        d0 = plane_depths(corr, init_flat(corr, opts, model))
    if np.any(d0 <= 0):
        raise InvalidInputError("initial depths must be positive")

    result = lbfgs_minimize(
        model.value_and_grad, d0,
        max_iterations=opts.max_iterations,
        energy_tolerance=opts.energy_tolerance,
        gradient_tolerance=opts.gradient_tolerance,
        memory=opts.lbfgs_memory,
        feasible=lambda d: bool(np.all(d > 0)),
    )
    depth = DepthMap.from_vector(corr.camera, result.x, corr.valid)
    logger.info("reconstruct: E %.6g -> %.6g in %d iterations (%s)",
                result.history[0].energy, result.f, result.iterations, result.message)
    return ReconstructionResult(
        depth=depth,
        normals=estimate_normals(depth),
        final_energy=result.f,
        iterations=result.iterations,
        converged=result.converged,
        initial_energy=result.history[0].energy,
        initial_depth=DepthMap.from_vector(corr.camera, d0, corr.valid),
        message=result.message,
        history=result.history,
    )
