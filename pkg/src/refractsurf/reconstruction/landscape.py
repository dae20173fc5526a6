"""Energy landscape of a two-point surface.

Two adjacent pixels in one image row see a background plane through a surface
made of just two points.  Their shared normal is perpendicular to the segment
joining the points and lies in the plane spanned by that segment and the
camera y-axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from refractsurf.errors import GeometryError, InvalidInputError
from refractsurf.optics import AIR_TO_WATER, refract_many

LOG_FLOOR = 1e-16


@dataclass(frozen=True)
class TwoPointSetup:
    """Two lines of sight with slopes ``x/z = -+ray_slope`` in the xz-plane.

    ``truth`` holds the ground-truth distances along each ray; the background
    points are traced from that configuration onto the plane ``z = background_z``.
    """

    truth: tuple[float, float] = (2.5, 2.5)
    background_z: float = 3.0
    mu: float = AIR_TO_WATER
    ray_slope: float = 0.25
    tir_penalty: float = 10.0

    def __post_init__(self) -> None:
        if min(self.truth) <= 0 or self.ray_slope <= 0 or self.mu <= 0:
            raise InvalidInputError("depths, ray slope and mu must be positive")

    @property
    def dirs(self) -> np.ndarray:
        r = np.array([[-self.ray_slope, 0.0, 1.0], [self.ray_slope, 0.0, 1.0]])
        return r / np.linalg.norm(r, axis=1, keepdims=True)


def _two_point_normals(X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    t = X2 - X1
    n = np.cross(t, np.array([0.0, 1.0, 0.0]))
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    return np.where(n[..., 2:3] > 0, -n, n)


def background_points_2pt(setup: TwoPointSetup) -> np.ndarray:
    """Background points (2, 3) reached by the ground-truth light paths."""
    r = setup.dirs
    X = np.asarray(setup.truth)[:, None] * r
    n = _two_point_normals(X[0], X[1])
    s, ok = refract_many(-r, np.broadcast_to(n, (2, 3)), setup.mu)
    if not ok.all() or np.any(s[:, 2] <= 0):
        raise GeometryError("ground-truth two-point configuration has no valid light path")
    t = (setup.background_z - X[:, 2]) / s[:, 2]
    if np.any(t <= 0):
        raise GeometryError("ground-truth points lie behind the background")
    return X + t[:, None] * s


def energy_2pt(setup: TwoPointSetup, d1, d2, xb: np.ndarray | None = None) -> np.ndarray:
    """Light-path energy for arrays of candidate distances ``d1``, ``d2``."""
    xb = background_points_2pt(setup) if xb is None else xb
    d1, d2 = np.broadcast_arrays(np.asarray(d1, dtype=np.float64), np.asarray(d2, dtype=np.float64))
    r = setup.dirs
    X1 = d1[..., None] * r[0]
    X2 = d2[..., None] * r[1]
    n = _two_point_normals(X1, X2)
    total = np.zeros(d1.shape)
    for X, ray, b in ((X1, r[0], xb[0]), (X2, r[1], xb[1])):
        s, ok = refract_many(np.broadcast_to(-ray, X.shape), n, setup.mu)
        w = b - X
        p = w - np.sum(s * w, axis=-1, keepdims=True) * s
        ell = np.linalg.norm(p, axis=-1)
        total += np.where(ok, ell, setup.tir_penalty)
        total += np.maximum(0.0, X[..., 2] - b[2])
    return total


def energy_grid_2pt(d1_range, d2_range, setup: TwoPointSetup | None = None) -> np.ndarray:
    """``log10`` energy on the grid; entry ``[i, j]`` is ``(d1_range[i], d2_range[j])``."""
    setup = setup or TwoPointSetup()
    d1 = np.asarray(d1_range, dtype=np.float64)
    d2 = np.asarray(d2_range, dtype=np.float64)
    if d1.size == 0 or d2.size == 0:
        raise InvalidInputError("depth ranges must be non-empty")
    D1, D2 = np.meshgrid(d1, d2, indexing="ij")
    return np.log10(np.maximum(energy_2pt(setup, D1, D2), LOG_FLOOR))


def grid_argmin(values: np.ndarray, d1_range, d2_range) -> tuple[float, float]:
    i, j = np.unravel_index(int(np.argmin(values)), values.shape)
    return float(np.asarray(d1_range)[i]), float(np.asarray(d2_range)[j])
