"""Camera models and pixel <-> ray conversions.

The camera sits at the world origin and looks down +Z.  Perspective cameras
are described by a pinhole intrinsic matrix; orthographic cameras by a pixel
pitch (world units per pixel) and an image center.  Pixel coordinates are
continuous; integer pixel ``(col, row)`` is sampled at ``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from refractsurf.errors import BehindCameraError, InvalidDepthError, InvalidInputError

Mode = Literal["perspective", "orthographic"]

MODES: tuple[str, ...] = ("perspective", "orthographic")


@dataclass(frozen=True)
class Pixel:
    """Continuous pixel coordinate (u = column, v = row)."""

    u: float
    v: float


@dataclass(frozen=True)
class Ray:
    """Half-line ``origin + d * dir`` with a unit direction."""

    origin: np.ndarray
    dir: np.ndarray

    def __post_init__(self) -> None:
        origin = np.array(self.origin, dtype=np.float64).reshape(3)
        direction = np.array(self.dir, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(direction)
        if not np.isfinite(norm) or norm == 0.0:
            raise InvalidInputError("ray direction must be finite and non-zero")
        direction = direction / norm
        origin.setflags(write=False)
        direction.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dir", direction)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole or orthographic camera at the origin looking toward +Z.

    Attributes:
        mode: ``"perspective"`` or ``"orthographic"``.
        width: Image width in pixels (number of columns).
        height: Image height in pixels (number of rows).
        fx, fy: Focal lengths in pixels (perspective only).
        cx, cy: Principal point (perspective) or image center (orthographic)
            in pixels.
        pitch: World units per pixel (orthographic only).
    """

    mode: Mode
    width: int
    height: int
    fx: float = 1.0
    fy: float = 1.0
    cx: float = 0.0
    cy: float = 0.0
    pitch: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown camera mode {self.mode!r}")
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise InvalidInputError("camera width and height must be positive")
        values = (self.fx, self.fy, self.cx, self.cy, self.pitch)
        if not all(np.isfinite(values)):
            raise InvalidInputError("camera parameters must be finite")
        if self.mode == "perspective" and (self.fx <= 0 or self.fy <= 0):
            raise InvalidInputError("focal lengths must be positive")
        if self.mode == "orthographic" and self.pitch <= 0:
            raise InvalidInputError("pixel pitch must be positive")

    @classmethod
    def perspective(cls, width: int, height: int, fx: float, fy: float,
                    cx: float, cy: float) -> "CameraModel":
        return cls("perspective", width, height, fx=fx, fy=fy, cx=cx, cy=cy)

    @classmethod
    def orthographic(cls, width: int, height: int, pitch: float,
                     cx: float | None = None, cy: float | None = None) -> "CameraModel":
        cx = width / 2.0 if cx is None else cx
        cy = height / 2.0 if cy is None else cy
        return cls("orthographic", width, height, cx=cx, cy=cy, pitch=pitch)

    @classmethod
    def default(cls, mode: Mode, rows: int, cols: int,
                extent: float = 1.0, depth: float = 2.0) -> "CameraModel":
        """Camera whose image covers ``[-extent, extent]^2`` at z = ``depth``."""
        if mode == "perspective":
            return cls.perspective(cols, rows, fx=cols * depth / (2 * extent),
                                   fy=rows * depth / (2 * extent),
                                   cx=cols / 2.0, cy=rows / 2.0)
        return cls.orthographic(cols, rows, pitch=2 * extent / cols)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        """Grid shape as ``(rows, cols)``."""
        return (int(self.height), int(self.width))

    def params(self) -> tuple[float, float, float, float, float, float]:
        """Six parameters stored in the RFRC camera block."""
        return (float(self.fx), float(self.fy), float(self.cx), float(self.cy),
                float(self.pitch), 0.0)

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Continuous ``(u, v)`` coordinates of every pixel center, shape (rows, cols)."""
        rows, cols = self.shape
        v, u = np.meshgrid(np.arange(rows) + 0.5, np.arange(cols) + 0.5, indexing="ij")
        return u, v

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origins and unit directions of all pixel-center rays, each (rows, cols, 3)."""
        u, v = self.pixel_centers()
        return unproject_many(self, u, v)


def unproject_many(camera: CameraModel, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`unproject`; returns ``(origins, dirs)`` of shape ``(..., 3)``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise InvalidInputError("pixel coordinates must be finite")
    u, v = np.broadcast_arrays(u, v)
    if camera.mode == "perspective":
        x = (u - camera.cx) / camera.fx
        y = (v - camera.cy) / camera.fy
        dirs = np.stack([x, y, np.ones_like(x)], axis=-1)
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = np.zeros_like(dirs)
    else:
        x = (u - camera.cx) * camera.pitch
        y = (v - camera.cy) * camera.pitch
        origins = np.stack([x, y, np.zeros_like(x)], axis=-1)
        dirs = np.zeros_like(origins)
        dirs[..., 2] = 1.0
    return origins, dirs


def project_many(camera: CameraModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`project`; ``points`` has shape ``(..., 3)``."""
    points = np.asarray(points, dtype=np.float64)
    if camera.mode == "perspective":
        z = points[..., 2]
        if np.any(z <= 0):
            raise BehindCameraError("cannot project points with z <= 0")
        u = camera.fx * points[..., 0] / z + camera.cx
        v = camera.fy * points[..., 1] / z + camera.cy
    else:
        u = points[..., 0] / camera.pitch + camera.cx
        v = points[..., 1] / camera.pitch + camera.cy
    return u, v


def unproject(camera: CameraModel, pixel: Pixel) -> Ray:
    """Line of sight through ``pixel``.

    Perspective rays start at the origin with direction ``K^-1 [u, v, 1]``
    normalized; orthographic rays start on the z = 0 plane and point along +Z.
    """
    origins, dirs = unproject_many(camera, pixel.u, pixel.v)
    return Ray(origins, dirs)


def project(camera: CameraModel, point) -> Pixel:
    u, v = project_many(camera, np.asarray(point, dtype=np.float64).reshape(3))
    return Pixel(float(u), float(v))


def point_on_ray(ray: Ray, d: float) -> np.ndarray:
    """Point at distance ``d`` along ``ray``.

    Raises:
        InvalidDepthError: If ``d`` is not strictly positive.
    """
    if not np.isfinite(d) or d <= 0:
        raise InvalidDepthError(f"depth along ray must be positive, got {d}")
    return ray.origin + d * ray.dir
