"""Per-pixel data containers shared by the tracer, the solver and file IO.

All containers hold (rows, cols) grids; invalid pixels carry NaN values and a
False entry in ``valid``.  Arrays are copied on construction and made
read-only so instances can be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from refractsurf.camera import CameraModel
from refractsurf.errors import InvalidInputError
from refractsurf.optics import MediumPair


def _frozen(a, shape: tuple[int, ...], dtype=np.float64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    if a.shape != shape:
        raise InvalidInputError(f"expected array of shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CorrespondenceMap:
    """Known background point ``xb`` observed at each pixel center."""

    camera: CameraModel
    media: MediumPair
    xb: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        shape = self.camera.shape
        valid = _frozen(self.valid, shape, bool)
        xb = np.array(self.xb, dtype=np.float64)
        if xb.shape != shape + (3,):
            raise InvalidInputError(f"xb must have shape {shape + (3,)}, got {xb.shape}")
        xb[~valid] = np.nan
        if np.any(~np.isfinite(xb[valid])) or np.any(xb[valid][:, 2] <= 0):
            raise InvalidInputError("valid background points must be finite with z > 0")
        xb.setflags(write=False)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "xb", xb)

    @property
    def shape(self) -> tuple[int, int]:
        return self.camera.shape

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Distance ``d`` along each pixel's line of sight."""

    camera: CameraModel
    d: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        shape = self.camera.shape
        valid = _frozen(self.valid, shape, bool)
        d = np.array(self.d, dtype=np.float64)
        if d.shape != shape:
            raise InvalidInputError(f"d must have shape {shape}, got {d.shape}")
        d[~valid] = np.nan
        if np.any(~np.isfinite(d[valid])) or np.any(d[valid] <= 0):
            raise InvalidInputError("depths must be positive and finite on valid pixels")
        d.setflags(write=False)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "d", d)

    @classmethod
    def from_vector(cls, camera: CameraModel, values, valid) -> "DepthMap":
        d = np.full(camera.shape, np.nan)
        d[np.asarray(valid, dtype=bool)] = values
        return cls(camera, d, valid)

    @classmethod
    def from_z(cls, camera: CameraModel, z, valid=None) -> "DepthMap":
        """Depth map whose points have the given z-coordinates."""
        z = np.asarray(z, dtype=np.float64)
        if valid is None:
            valid = np.isfinite(z)
        origins, dirs = camera.rays()
        d = (z - origins[..., 2]) / dirs[..., 2]
        return cls(camera, d, valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.camera.shape

    @property
    def points(self) -> np.ndarray:
        """Surface point cloud, shape (rows, cols, 3); NaN on invalid pixels."""
        origins, dirs = self.camera.rays()
        return origins + self.d[..., None] * dirs

    @property
    def z(self) -> np.ndarray:
        origins, dirs = self.camera.rays()
        return origins[..., 2] + self.d * dirs[..., 2]

    def vector(self) -> np.ndarray:
        """Depths of valid pixels in row-major order (the solver's variables)."""
        return self.d[self.valid].copy()


@dataclass(frozen=True, eq=False)
class NormalField:
    """Unit normals facing the camera (n_z < 0)."""

    n: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        valid = np.array(self.valid, dtype=bool)
        n = np.array(self.n, dtype=np.float64)
        if n.shape != valid.shape + (3,):
            raise InvalidInputError("normal array must have shape valid.shape + (3,)")
        n[~valid] = np.nan
        valid.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "n", n)

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape


@dataclass(frozen=True, eq=False)
class GroundTruth:
    depth: DepthMap
    normals: NormalField
    surface: object
