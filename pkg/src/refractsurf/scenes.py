"""Analytic benchmark surfaces, backgrounds and scene configuration.

Two benchmark height fields are provided, both oscillating by 0.1 around a
mean depth of 2:

* ``wave1``: ``z = 2 + 0.1 cos(pi (t + 50) r1 / 80)``, ``r1`` the distance to (1, 0.5)
* ``wave2``: ``z = 2 - 0.1 cos(pi (t + 60) r2 / 75)``, ``r2`` the distance to (-0.05, -0.05)

Backgrounds are either a plane ``z = z0`` or
``z = 2.5 + 0.05 (sin(2 pi x) + cos(2 pi y))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from refractsurf.camera import CameraModel, Ray
from refractsurf.errors import ConfigError, GeometryError, InvalidInputError
from refractsurf.optics import AIR_TO_WATER, MediumPair

SurfaceKind = Literal["wave1", "wave2", "flat_plane", "custom_heightfield"]
BackgroundKind = Literal["flat", "func"]

SURFACE_KINDS = ("wave1", "wave2", "flat_plane", "custom_heightfield")
BACKGROUND_KINDS = ("flat", "func")

N_FRAMES = 100
DEFAULT_BACKGROUND_Z = 2.5

# Ray marching for height-field intersection.
MARCH_STEP = 0.01
MARCH_CHUNK = 128
MAX_MARCH_DISTANCE = 100.0


@dataclass(frozen=True)
class SurfaceSpec:
    """Refractive surface ``z = f(x, y)``.

    ``samples``/``extent`` are only used by ``custom_heightfield``: heights on a
    regular (rows, cols) grid spanning ``extent = (xmin, xmax, ymin, ymax)``,
    bilinearly interpolated with clamped edges.
    """

    kind: SurfaceKind = "wave1"
    t: float = 0.0
    c: float = 2.0
    samples: np.ndarray | None = field(default=None, compare=False)
    extent: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0)

    def __post_init__(self) -> None:
        if self.kind not in SURFACE_KINDS:
            raise InvalidInputError(f"unknown surface kind {self.kind!r}")
        if self.kind in ("wave1", "wave2") and not 0 <= self.t <= N_FRAMES - 1:
            raise InvalidInputError(f"frame time t must lie in [0, {N_FRAMES - 1}], got {self.t}")
        if self.kind == "custom_heightfield":
            if self.samples is None:
                raise InvalidInputError("custom_heightfield needs a samples grid")
            samples = np.array(self.samples, dtype=np.float64)
            if samples.ndim != 2 or min(samples.shape) < 2 or not np.all(np.isfinite(samples)):
                raise InvalidInputError("samples must be a finite 2-D grid of at least 2x2")
            samples.setflags(write=False)
            object.__setattr__(self, "samples", samples)
            xmin, xmax, ymin, ymax = self.extent
            if not (xmax > xmin and ymax > ymin):
                raise InvalidInputError("extent must be (xmin, xmax, ymin, ymax) with max > min")


@dataclass(frozen=True)
class BackgroundSpec:
    kind: BackgroundKind = "flat"
    z0: float = DEFAULT_BACKGROUND_Z

    def __post_init__(self) -> None:
        if self.kind not in BACKGROUND_KINDS:
            raise InvalidInputError(f"unknown background kind {self.kind!r}")
        if not np.isfinite(self.z0) or self.z0 <= 0:
            raise InvalidInputError("background depth must be positive")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to synthesize one frame of correspondences."""

    surface: SurfaceSpec
    background: BackgroundSpec
    media: MediumPair
    camera: CameraModel
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.noise_std < 0:
            raise InvalidInputError("noise_std must be non-negative")
        # Sample the neighbourhood of the imaged patch; the background must
        # stay strictly behind the surface.
        xs = np.linspace(-1.5, 1.5, 61)
        x, y = np.meshgrid(xs, xs)
        if np.max(surface_height(self.surface, x, y)) >= np.min(background_height(self.background, x, y)):
            raise InvalidInputError("background must lie behind the refractive surface")

    @property
    def grid(self) -> tuple[int, int]:
        return self.camera.shape

    def at_time(self, t: float) -> "SceneSpec":
        return replace(self, surface=replace(self.surface, t=t))


# ---------------------------------------------------------------------------
# Height fields
# ---------------------------------------------------------------------------

def _wave_params(spec: SurfaceSpec) -> tuple[float, float, float, float, float]:
    """(mean, signed amplitude, wavenumber, center x, center y)."""
    if spec.kind == "wave1":
        return 2.0, 0.1, np.pi * (spec.t + 50) / 80.0, 1.0, 0.5
    return 2.0, -0.1, np.pi * (spec.t + 60) / 75.0, -0.05, -0.05


def _bilinear(spec: SurfaceSpec, x, y):
    grid = spec.samples
    rows, cols = grid.shape
    xmin, xmax, ymin, ymax = spec.extent
    fx = np.clip((np.asarray(x, dtype=np.float64) - xmin) / (xmax - xmin) * (cols - 1), 0, cols - 1)
    fy = np.clip((np.asarray(y, dtype=np.float64) - ymin) / (ymax - ymin) * (rows - 1), 0, rows - 1)
    j = np.minimum(np.floor(fx).astype(int), cols - 2)
    i = np.minimum(np.floor(fy).astype(int), rows - 2)
    a = fx - j
    b = fy - i
    z00, z01 = grid[i, j], grid[i, j + 1]
    z10, z11 = grid[i + 1, j], grid[i + 1, j + 1]
    z = (1 - a) * (1 - b) * z00 + a * (1 - b) * z01 + (1 - a) * b * z10 + a * b * z11
    # Derivatives with respect to world x/y; zero outside the clamped range.
    inside_x = (np.asarray(x) > xmin) & (np.asarray(x) < xmax)
    inside_y = (np.asarray(y) > ymin) & (np.asarray(y) < ymax)
    dzdx = ((1 - b) * (z01 - z00) + b * (z11 - z10)) * (cols - 1) / (xmax - xmin) * inside_x
    dzdy = ((1 - a) * (z10 - z00) + a * (z11 - z01)) * (rows - 1) / (ymax - ymin) * inside_y
    return z, dzdx, dzdy


def surface_height(spec: SurfaceSpec, x, y):
    """Surface depth z at world (x, y); broadcasts over arrays."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.kind == "flat_plane":
        return np.full(np.broadcast(x, y).shape, float(spec.c))[()]
    if spec.kind == "custom_heightfield":
        return _bilinear(spec, x, y)[0]
    mean, amp, k, x0, y0 = _wave_params(spec)
    r = np.hypot(x - x0, y - y0)
    return mean + amp * np.cos(k * r)


def surface_gradient(spec: SurfaceSpec, x, y):
    """Closed-form ``(dz/dx, dz/dy)``; zero at the wave centers."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.kind == "flat_plane":
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero, zero.copy()
    if spec.kind == "custom_heightfield":
        _, gx, gy = _bilinear(spec, x, y)
        return gx, gy
    mean, amp, k, x0, y0 = _wave_params(spec)
    r = np.hypot(x - x0, y - y0)
    # d/dx cos(k r) = -k^2 sinc(k r / pi) (x - x0), finite at r = 0.
    common = -amp * k * k * np.sinc(k * r / np.pi)
    return common * (x - x0), common * (y - y0)


def surface_normals(spec: SurfaceSpec, x, y) -> np.ndarray:
    """Unit normals ``normalize((fx, fy, -1))`` facing the camera, shape (..., 3)."""
    gx, gy = surface_gradient(spec, x, y)
    gx, gy = np.broadcast_arrays(gx, gy)
    n = np.stack([gx, gy, -np.ones_like(gx)], axis=-1)
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def background_height(spec: BackgroundSpec, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.kind == "flat":
        return np.full(np.broadcast(x, y).shape, float(spec.z0))[()]
    return DEFAULT_BACKGROUND_Z + 0.05 * (np.sin(2 * np.pi * x) + np.cos(2 * np.pi * y))


def background_gradient(spec: BackgroundSpec, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.kind == "flat":
        zero = np.zeros(np.broadcast(x, y).shape)
        return zero, zero
    return 0.1 * np.pi * np.cos(2 * np.pi * x), -0.1 * np.pi * np.sin(2 * np.pi * y)


# ---------------------------------------------------------------------------
# Ray / height-field intersection
# ---------------------------------------------------------------------------

HeightFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
GradFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def intersect_heightfield(origins, dirs, height: HeightFn, grad: GradFn, start: float,
                          step: float = MARCH_STEP,
                          max_distance: float = MAX_MARCH_DISTANCE) -> tuple[np.ndarray, np.ndarray]:
    """First crossing of rays with ``z = height(x, y)`` beyond ``start``.

    Marches ``F(d) = o_z + d r_z - h(o_xy + d r_xy)`` in fixed steps to bracket
    the first sign change, bisects the bracket to 1e-12 and polishes with
    Newton steps that stay inside the bracket.

    Returns:
        ``(d, ok)`` arrays of shape ``origins.shape[:-1]``; ``d`` is NaN where
        no crossing exists within ``max_distance``.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    shape = origins.shape[:-1]
    o = origins.reshape(-1, 3)
    r = dirs.reshape(-1, 3)
    n = o.shape[0]

    def F(idx, d):
        p = o[idx] + d[..., None] * r[idx] if d.ndim == 1 else o[idx, None, :] + d[..., None] * r[idx, None, :]
        return p[..., 2] - height(p[..., 0], p[..., 1])

    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    pending = np.arange(n)
    offsets = np.arange(MARCH_CHUNK + 1) * step
    base = start
    while pending.size and base < max_distance:
        ds = base + offsets
        vals = F(pending, np.broadcast_to(ds, (pending.size, ds.size)))
        sign = vals >= 0
        change = sign[:, 1:] != sign[:, :-1]
        exact = vals[:, :-1] == 0
        hit = change | exact
        found = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        idx = pending[found]
        lo[idx] = ds[first[found]]
        hi[idx] = ds[first[found] + 1]
        pending = pending[~found]
        base += MARCH_CHUNK * step

    ok = np.isfinite(lo)
    idx = np.nonzero(ok)[0]
    a, b = lo[idx], hi[idx]
    fa = F(idx, a)
    while idx.size and np.max(b - a) > 1e-12:
        m = 0.5 * (a + b)
        fm = F(idx, m)
        left = (fa < 0) == (fm < 0)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    d = 0.5 * (a + b)
    bracket_lo, bracket_hi = lo[idx], hi[idx]
    for _ in range(3):
        p = o[idx] + d[:, None] * r[idx]
        gx, gy = grad(p[:, 0], p[:, 1])
        slope = r[idx, 2] - gx * r[idx, 0] - gy * r[idx, 1]
        f = p[:, 2] - height(p[:, 0], p[:, 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = d - f / slope
        good = np.isfinite(cand) & (cand >= bracket_lo) & (cand <= bracket_hi)
        cand_f = np.abs(F(idx, np.where(good, cand, d)))
        d = np.where(good & (cand_f <= np.abs(f)), cand, d)
    out = np.full(n, np.nan)
    out[idx] = d
    return out.reshape(shape), ok.reshape(shape)


def background_points(spec: BackgroundSpec, origins, dirs) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized background intersection; returns ``(points, ok)``."""
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    if spec.kind == "flat":
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (spec.z0 - origins[..., 2]) / dirs[..., 2]
        ok = np.isfinite(t) & (t > 0)
        t = np.where(ok, t, np.nan)
    else:
        t, ok = intersect_heightfield(
            origins, dirs,
            lambda x, y: background_height(spec, x, y),
            lambda x, y: background_gradient(spec, x, y),
            start=0.0)
        ok &= t > 0
    points = origins + t[..., None] * dirs
    return points, ok


def background_point(spec: BackgroundSpec, ray: Ray) -> np.ndarray:
    """Intersection of ``ray`` with the background surface.

    Raises:
        GeometryError: If the ray points away from the background or misses it.
    """
    if ray.dir[2] <= 0:
        raise GeometryError("ray must travel toward +Z to reach the background")
    points, ok = background_points(spec, ray.origin[None], ray.dir[None])
    if not ok[0]:
        raise GeometryError("ray does not intersect the background")
    return points[0]


# ---------------------------------------------------------------------------
# Key-value scene configuration
# ---------------------------------------------------------------------------

SCENE_KEYS = (
    "surface.kind", "surface.t", "surface.c", "surface.samples", "surface.extent",
    "background.kind", "background.z0",
    "media.mu",
    "camera.mode", "camera.fx", "camera.fy", "camera.cx", "camera.cy", "camera.pitch",
    "grid.rows", "grid.cols",
    "noise.std", "noise.seed",
)


def parse_key_values(text: str, allowed: tuple[str, ...]) -> dict[str, str]:
    """Parse ``key = value`` lines ('#' starts a comment); reject unknown keys."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _number(values: dict[str, str], key: str, default: float, kind=float):
    if key not in values:
        return default
    try:
        return kind(values[key])
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {values[key]!r} as {kind.__name__}") from None


def scene_from_mapping(values: dict[str, str], base_dir: Path | None = None) -> SceneSpec:
    from refractsurf.io import read_rfdm

    kind = values.get("surface.kind", "wave1")
    if kind not in SURFACE_KINDS:
        raise ConfigError(f"surface.kind: unknown surface kind {kind!r}")
    samples = None
    extent = (-1.0, 1.0, -1.0, 1.0)
    if kind == "custom_heightfield":
        if "surface.samples" not in values:
            raise ConfigError("surface.samples: required for custom_heightfield")
        path = Path(values["surface.samples"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        samples = read_rfdm(path)[..., 0]
    if "surface.extent" in values:
        try:
            extent = tuple(float(p) for p in values["surface.extent"].split(","))
        except ValueError:
            raise ConfigError("surface.extent: expected xmin,xmax,ymin,ymax") from None
        if len(extent) != 4:
            raise ConfigError("surface.extent: expected xmin,xmax,ymin,ymax")
    bg_kind = values.get("background.kind", "flat")
    if bg_kind not in BACKGROUND_KINDS:
        raise ConfigError(f"background.kind: unknown background kind {bg_kind!r}")
    mode = values.get("camera.mode", "perspective")
    if mode not in ("perspective", "orthographic"):
        raise ConfigError(f"camera.mode: unknown camera mode {mode!r}")
    rows = _number(values, "grid.rows", 64, int)
    cols = _number(values, "grid.cols", 64, int)
    try:
        default = CameraModel.default(mode, rows, cols)
        if mode == "perspective":
            camera = CameraModel.perspective(
                cols, rows,
                fx=_number(values, "camera.fx", default.fx),
                fy=_number(values, "camera.fy", default.fy),
                cx=_number(values, "camera.cx", default.cx),
                cy=_number(values, "camera.cy", default.cy))
        else:
            camera = CameraModel.orthographic(
                cols, rows,
                pitch=_number(values, "camera.pitch", default.pitch),
                cx=_number(values, "camera.cx", default.cx),
                cy=_number(values, "camera.cy", default.cy))
        surface = SurfaceSpec(kind, t=_number(values, "surface.t", 0.0),
                              c=_number(values, "surface.c", 2.0),
                              samples=samples, extent=extent)
        background = BackgroundSpec(bg_kind, z0=_number(values, "background.z0", DEFAULT_BACKGROUND_Z))
        return SceneSpec(surface, background,
                         MediumPair(_number(values, "media.mu", AIR_TO_WATER)), camera,
                         noise_std=_number(values, "noise.std", 0.0),
                         seed=_number(values, "noise.seed", 0, int))
    except InvalidInputError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def parse_scene_config(text: str, base_dir: Path | None = None) -> SceneSpec:
    return scene_from_mapping(parse_key_values(text, SCENE_KEYS), base_dir)


def load_scene_config(path: str | Path) -> SceneSpec:
    path = Path(path)
    return parse_scene_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def format_scene_config(scene: SceneSpec) -> str:
    """Inverse of :func:`parse_scene_config` for the analytic surface kinds."""
    cam = scene.camera
    lines = [
        f"surface.kind = {scene.surface.kind}",
        f"surface.t = {scene.surface.t!r}",
        f"surface.c = {scene.surface.c!r}",
        f"background.kind = {scene.background.kind}",
        f"background.z0 = {scene.background.z0!r}",
        f"media.mu = {scene.media.mu!r}",
        f"camera.mode = {cam.mode}",
        f"camera.cx = {cam.cx!r}",
        f"camera.cy = {cam.cy!r}",
    ]
    if cam.mode == "perspective":
        lines += [f"camera.fx = {cam.fx!r}", f"camera.fy = {cam.fy!r}"]
    else:
        lines.append(f"camera.pitch = {cam.pitch!r}")
    lines += [f"grid.rows = {cam.height}", f"grid.cols = {cam.width}"]
    if scene.noise_std:
        lines += [f"noise.std = {scene.noise_std!r}", f"noise.seed = {scene.seed}"]
    return "\n".join(lines) + "\n"


def benchmark_scene(kind: SurfaceKind = "wave1", background: BackgroundKind = "flat",
                    t: float = 0.0, rows: int = 64, cols: int = 64,
                    mode: Literal["perspective", "orthographic"] = "perspective",
                    mu: float = AIR_TO_WATER, c: float = 2.0) -> SceneSpec:
    """Convenience constructor for the standard benchmark scenes."""
    return SceneSpec(SurfaceSpec(kind, t=t, c=c), BackgroundSpec(background),
                     MediumPair(mu), CameraModel.default(mode, rows, cols))
