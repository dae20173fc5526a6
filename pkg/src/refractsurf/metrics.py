"""Depth RMSE, normal angular error and height normalization."""

from __future__ import annotations

import warnings

import numpy as np

from refractsurf.errors import HeightAmbiguityWarning, InvalidInputError
from refractsurf.maps import DepthMap, NormalField


def _z_field(depth) -> np.ndarray:
    if isinstance(depth, DepthMap):
        return np.where(depth.valid, depth.z, np.nan)
    return np.asarray(depth, dtype=np.float64)


def rmse_depth(est, gt) -> float:
    """RMSE between the z-coordinates of two depth maps on jointly valid pixels.

    Accepts :class:`DepthMap` instances or raw z arrays with NaN for invalid.
    """
    a, b = _z_field(est), _z_field(gt)
    if a.shape != b.shape:
        raise InvalidInputError(f"grid mismatch: {a.shape} vs {b.shape}")
    both = np.isfinite(a) & np.isfinite(b)
    if not both.any():
        raise InvalidInputError("depth maps share no valid pixels")
    return float(np.sqrt(np.mean((a[both] - b[both]) ** 2)))


def normal_angles(est: NormalField, gt: NormalField) -> tuple[np.ndarray, int]:
    """Per-pixel angles in degrees on jointly valid pixels and the excluded count."""
    if est.shape != gt.shape:
        raise InvalidInputError(f"grid mismatch: {est.shape} vs {gt.shape}")
    both = est.valid & gt.valid
    if not both.any():
        raise InvalidInputError("normal fields share no valid pixels")
    a, b = est.n[both], gt.n[both]
    # atan2 keeps full precision for nearly parallel normals, unlike arccos
    angles = np.arctan2(np.linalg.norm(np.cross(a, b), axis=1), np.sum(a * b, axis=1))
    return np.degrees(angles), int(both.size - both.sum())


def mae_normals(est: NormalField, gt: NormalField) -> float:
    """Mean angular error in degrees."""
    return float(np.mean(normal_angles(est, gt)[0]))


def zero_mean_normalize(depth, perspective: bool | None = None) -> np.ndarray:
    """Shift a z-field to zero mean over its valid pixels.

    Returns a z array (NaN on invalid pixels).  The result is a height map,
    not a distance map, because shifted heights may be negative.  Under
    perspective projection the shift is still applied but warned about.
    """
    if isinstance(depth, DepthMap):
        perspective = depth.camera.mode == "perspective" if perspective is None else perspective
    if perspective:
        warnings.warn("zero-mean normalization is only meaningful for orthographic depth",
                      HeightAmbiguityWarning, stacklevel=2)
    z = _z_field(depth)
    finite = np.isfinite(z)
    if not finite.any():
        raise InvalidInputError("depth map has no valid pixels")
    return np.where(finite, z - np.mean(z[finite]), np.nan)
