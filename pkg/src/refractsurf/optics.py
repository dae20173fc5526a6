"""Vector refraction across a two-media interface.

Orientation convention used throughout the package: ``L`` points from the
surface point back toward the camera, ``n`` points to the camera's side of the
interface (so ``alpha = L . n > 0``) and the refracted direction ``s`` points
away from the camera into the second medium.  Callers holding a camera->surface
line of sight must negate it first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from refractsurf.errors import (
    InvalidInputError,
    OrientationError,
    TotalInternalReflectionError,
)

# Common index ratios n1/n2.
AIR_TO_WATER = 1.0 / 1.33
WATER_TO_AIR = 1.33


@dataclass(frozen=True)
class MediumPair:
    """Index-of-refraction ratio ``mu = n1 / n2`` (camera side over far side)."""

    mu: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.mu) or self.mu <= 0:
            raise InvalidInputError(f"mu must be positive and finite, got {self.mu}")


def refract_many(L, n, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Refract batches of unit vectors.

    Args:
        L: Unit vectors toward the camera, shape (..., 3).
        n: Unit normals on the camera side, shape (..., 3).
        mu: Index ratio n1 / n2.

    Returns:
        ``(s, ok)``: refracted unit directions (NaN where undefined) and a mask
        that is False where total internal reflection occurs or ``L . n <= 0``.
    """
    L = np.asarray(L, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    alpha = np.sum(L * n, axis=-1)
    radicand = (1.0 - mu * mu) + mu * mu * (alpha * alpha)
    ok = (alpha > 0) & (radicand >= 0)
    root = np.sqrt(np.where(ok, radicand, 0.0))
    s = -mu * L + n * (mu * alpha - root)[..., None]
    s /= np.linalg.norm(s, axis=-1, keepdims=True)
    s[~ok] = np.nan
    return s, ok


def refract(L, n, media: MediumPair) -> np.ndarray:
    """Refracted direction ``s = -mu L + n (mu alpha - sqrt(1 - mu^2 (1 - alpha^2)))``.

    Raises:
        InvalidInputError: If ``L`` or ``n`` is not unit length.
        OrientationError: If ``L . n <= 0``.
        TotalInternalReflectionError: If no transmitted ray exists.
    """
    L = np.asarray(L, dtype=np.float64).reshape(3)
    n = np.asarray(n, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(L) - 1.0) > 1e-9 or abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise InvalidInputError("refract expects unit-length L and n")
    alpha = float(L @ n)
    if alpha <= 0:
        raise OrientationError(f"L . n = {alpha:.3g}; normal must face the camera")
    mu = media.mu
    radicand = (1.0 - mu * mu) + mu * mu * (alpha * alpha)
    if radicand < 0:
        raise TotalInternalReflectionError(
            f"total internal reflection (mu sin(theta1) = {mu * np.sqrt(1 - alpha * alpha):.4f} > 1)")
    s = -mu * L + n * (mu * alpha - np.sqrt(radicand))
    return s / np.linalg.norm(s)


def refraction_angle_oracle(theta1: float, media: MediumPair) -> float:
    """Scalar Snell's law: ``theta2 = arcsin(mu sin theta1)``."""
    if not 0.0 <= theta1 < np.pi / 2:
        raise InvalidInputError("theta1 must lie in [0, pi/2)")
    x = media.mu * np.sin(theta1)
    if x > 1.0:
        raise TotalInternalReflectionError(f"mu sin(theta1) = {x:.4f} > 1")
    return float(np.arcsin(x))


def angle_between(a, b) -> np.ndarray:
    """Angle(s) in radians between vectors along the last axis, robust near 0 and pi."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)
