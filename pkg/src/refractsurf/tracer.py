"""Forward ray tracing through a refractive height field.

Produces exact pixel -> background-point correspondences together with the
ground-truth depth map and analytic normal field of the traced surface.
"""

from __future__ import annotations

import logging

import numpy as np

from refractsurf.camera import Pixel, Ray, project_many, unproject
from refractsurf.errors import DegenerateSceneError, GeometryError
from refractsurf.maps import CorrespondenceMap, DepthMap, GroundTruth, NormalField
from refractsurf.optics import refract_many
from refractsurf.scenes import (
    SceneSpec,
    SurfaceSpec,
    background_points,
    intersect_heightfield,
    surface_gradient,
    surface_height,
    surface_normals,
)

logger = logging.getLogger(__name__)

SURFACE_MARCH_START = 0.1
MAX_INVALID_FRACTION = 0.5


def intersect_surface_many(origins, dirs, spec: SurfaceSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`intersect_surface`; returns ``(d, ok)``."""
    return intersect_heightfield(
        origins, dirs,
        lambda x, y: surface_height(spec, x, y),
        lambda x, y: surface_gradient(spec, x, y),
        start=SURFACE_MARCH_START)


def intersect_surface(ray: Ray, spec: SurfaceSpec) -> tuple[float, np.ndarray]:
    """Nearest intersection of ``ray`` with the surface beyond d = 0.1.

    Raises:
        GeometryError: If the ray travels away from the surface or never hits it.
    """
    if ray.dir[2] <= 0:
        raise GeometryError("ray must travel toward +Z")
    d, ok = intersect_surface_many(ray.origin[None], ray.dir[None], spec)
    if not ok[0]:
        raise GeometryError("ray does not intersect the surface")
    return float(d[0]), ray.origin + d[0] * ray.dir


def trace_rays(scene: SceneSpec, origins, dirs) -> dict[str, np.ndarray]:
    """Trace camera rays to the background.

    Returns a dict with ``d``, ``xr``, ``normals`` (analytic, camera-facing),
    ``hit`` (surface intersection found), ``s`` (refracted direction), ``xb``
    and ``valid`` (background reached without total internal reflection).
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    d, hit = intersect_surface_many(origins, dirs, scene.surface)
    xr = origins + d[..., None] * dirs
    normals = surface_normals(scene.surface, xr[..., 0], xr[..., 1])
    s, refracted = refract_many(-dirs, normals, scene.media.mu)
    refracted &= hit
    xb, reached = background_points(scene.background, xr, np.where(refracted[..., None], s, 0.0))
    valid = hit & refracted & reached
    xb[~valid] = np.nan
    return {"d": d, "xr": xr, "normals": normals, "hit": hit, "s": s, "xb": xb, "valid": valid}


def trace_pixel(scene: SceneSpec, pixel: Pixel) -> np.ndarray | None:
    """Background point seen through ``pixel``, or None if the path is invalid."""
    ray = unproject(scene.camera, pixel)
    out = trace_rays(scene, ray.origin[None], ray.dir[None])
    return out["xb"][0] if out["valid"][0] else None


def generate(scene: SceneSpec) -> tuple[CorrespondenceMap, GroundTruth]:
    """Trace every pixel center of ``scene``.

    Raises:
        DegenerateSceneError: If more than half of the pixels are invalid.
    """
    camera = scene.camera
    origins, dirs = camera.rays()
    out = trace_rays(scene, origins, dirs)
    valid = out["valid"]
    invalid_fraction = 1.0 - valid.mean()
    if invalid_fraction > MAX_INVALID_FRACTION:
        raise DegenerateSceneError(f"{invalid_fraction:.0%} of pixels have no valid light path")
    if invalid_fraction:
        logger.info("%d of %d pixels invalid", (~valid).sum(), valid.size)
    xb = out["xb"]
    if scene.noise_std > 0:
        rng = np.random.default_rng(scene.seed)
        xb = xb.copy()
        xb[valid] += rng.normal(0.0, scene.noise_std, size=(int(valid.sum()), 3))
    corr = CorrespondenceMap(camera, scene.media, xb, valid)
    hit = out["hit"]
    truth = GroundTruth(
        depth=DepthMap(camera, np.where(hit, out["d"], np.nan), hit),
        normals=NormalField(out["normals"], hit),
        surface=scene.surface,
    )
    return corr, truth


def synthesize_flow(corr: CorrespondenceMap) -> np.ndarray:
    """Per-pixel displacement ``x - project(X_B)``, shape (rows, cols, 2); NaN if invalid."""
    u, v = corr.camera.pixel_centers()
    flow = np.full(corr.shape + (2,), np.nan)
    pu, pv = project_many(corr.camera, corr.xb[corr.valid])
    flow[corr.valid, 0] = u[corr.valid] - pu
    flow[corr.valid, 1] = v[corr.valid] - pv
    return flow


def straight_line_points(scene: SceneSpec) -> np.ndarray:
    """Background points hit without any refraction (used for mu = 1 checks)."""
    origins, dirs = scene.camera.rays()
    return background_points(scene.background, origins, dirs)[0]
