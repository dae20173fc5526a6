"""Light-path energy of a depth map and its exact gradient.

For every pixel ``i`` with depth ``d_i`` along its line of sight ``r_i``:

1. ``X_i = o_i + d_i r_i`` (surface point cloud),
2. ``n_i`` from central differences of the point cloud (one-sided at borders),
   oriented toward the camera along ``r_i``,
3. ``s_i = refract(-r_i, n_i, mu)`` and the point-line distance ``l_i`` from the
   known background point ``B_i`` to the line ``X_i + t s_i``.

The energy is ``sum_i l_i + max(0, z_i - z_i^B)``.  Pixels whose refraction is
undefined (total internal reflection or a degenerate normal) add a constant
penalty instead of ``l_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from refractsurf.camera import CameraModel
from refractsurf.errors import InvalidInputError
from refractsurf.maps import CorrespondenceMap, DepthMap, NormalField

DEGENERATE_CROSS = 1e-14
ZERO_RESIDUAL = 1e-12


@dataclass(frozen=True)
class Stencil:
    """Neighbour indices (into the flat list of valid pixels) for the tangents.

    ``t_u = X[u_next] - X[u_prev]`` and ``t_v = X[v_next] - X[v_prev]``; ``ok``
    is False for pixels lacking a valid neighbour along either axis.
    """

    u_next: np.ndarray
    u_prev: np.ndarray
    v_next: np.ndarray
    v_prev: np.ndarray
    ok: np.ndarray


def _axis_pair(index: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 1)
    padded = np.pad(index, pad, constant_values=-1)
    if axis == 1:
        nxt, prv = padded[:, 2:], padded[:, :-2]
    else:
        nxt, prv = padded[2:, :], padded[:-2, :]
    nxt, prv = nxt[index >= 0], prv[index >= 0]
    own = index[index >= 0]
    has_n, has_p = nxt >= 0, prv >= 0
    a = np.where(has_n, nxt, own)
    b = np.where(has_p, prv, own)
    return a, b, has_n | has_p


def build_stencil(valid: np.ndarray) -> Stencil:
    """Central differences where both neighbours are valid, else one-sided."""
    valid = np.asarray(valid, dtype=bool)
    index = np.full(valid.shape, -1, dtype=np.int64)
    index[valid] = np.arange(int(valid.sum()))
    un, up, uok = _axis_pair(index, 1)
    vn, vp, vok = _axis_pair(index, 0)
    return Stencil(un, up, vn, vp, uok & vok)


def _normals_from_points(X: np.ndarray, st: Stencil, toward: np.ndarray | None = None):
    """Unit normals of the point cloud.

    Oriented so that ``n . toward > 0`` when ``toward`` is given, else n_z < 0.
    """
    tu = X[st.u_next] - X[st.u_prev]
    tv = X[st.v_next] - X[st.v_prev]
    c = np.cross(tu, tv)
    cn = np.linalg.norm(c, axis=1)
    ok = st.ok & (cn >= DEGENERATE_CROSS)
    if toward is None:
        sign = np.where(c[:, 2] > 0, -1.0, 1.0)
    else:
        sign = np.where(np.sum(c * toward, axis=1) < 0, -1.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = c * (sign / cn)[:, None]
    return n, ok, tu, tv, cn, sign


def estimate_normals(depth: DepthMap, camera: CameraModel | None = None) -> NormalField:
    """Normals of the depth map's point cloud, oriented toward the camera."""
    camera = camera or depth.camera
    if camera.shape != depth.shape:
        raise InvalidInputError("camera and depth map grids differ")
    X = DepthMap(camera, depth.d, depth.valid).points[depth.valid]
    st = build_stencil(depth.valid)
    n, ok, *_ = _normals_from_points(X, st)
    field = np.full(depth.shape + (3,), np.nan)
    mask = np.zeros(depth.shape, dtype=bool)
    mask[depth.valid] = ok
    field[mask] = n[ok]
    return NormalField(field, mask)


def light_path_residual(X_R, s, X_B) -> float:
    """Distance from ``X_B`` to the line through ``X_R`` with unit direction ``s``."""
    X_R = np.asarray(X_R, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    w = np.asarray(X_B, dtype=np.float64) - X_R
    return float(np.linalg.norm(w - (s @ w) * s))


@dataclass
class EnergyTerms:
    """Per-pixel breakdown of one energy evaluation (flat valid-pixel order)."""

    total: float
    residual: np.ndarray
    barrier: np.ndarray
    refracted: np.ndarray
    in_domain: np.ndarray


class LightPathEnergy:
    """Energy and gradient over the valid pixels of a correspondence map.

    The optimization vector holds the depths of valid pixels in row-major order.
    """

    def __init__(self, corr: CorrespondenceMap, tir_penalty: float = 10.0):
        self.corr = corr
        self.mu = corr.media.mu
        self.tir_penalty = float(tir_penalty)
        origins, dirs = corr.camera.rays()
        self.valid = corr.valid
        self.origins = origins[corr.valid]
        self.dirs = dirs[corr.valid]
        self.xb = corr.xb[corr.valid]
        self.stencil = build_stencil(corr.valid)
        self.size = self.origins.shape[0]

    def points(self, d: np.ndarray) -> np.ndarray:
        return self.origins + d[:, None] * self.dirs

    def _check(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        if d.shape != (self.size,):
            raise InvalidInputError(f"expected {self.size} depths, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidInputError("depths must be finite")
        return d

    def terms(self, d) -> EnergyTerms:
        _, _, terms = self._evaluate(self._check(d), want_grad=False)
        return terms

    def __call__(self, d) -> float:
        return self._evaluate(self._check(d), want_grad=False)[0]

    def value_and_grad(self, d) -> tuple[float, np.ndarray]:
        E, g, _ = self._evaluate(self._check(d), want_grad=True)
        return E, g

    def residuals_with_normals(self, d, normals) -> np.ndarray:
        """Per-pixel ``l_i`` using externally supplied normals (e.g. analytic ones)."""
        X = self.points(self._check(d))
        n = np.asarray(normals, dtype=np.float64)
        s, ok = _refract(-self.dirs, n, self.mu)[:2]
        w = self.xb - X
        p = w - np.sum(s * w, axis=1)[:, None] * s
        out = np.linalg.norm(p, axis=1)
        out[~ok] = np.nan
        return out

    def _evaluate(self, d: np.ndarray, want_grad: bool):
        mu = self.mu
        st = self.stencil
        X = self.points(d)
        L = -self.dirs
        # each normal faces its own line of sight, so only TIR is penalized
        n, n_ok, tu, tv, cn, sign = _normals_from_points(X, st, toward=L)
        s, ok, alpha, k, s_norm, phi = _refract(L, n, mu)
        ok &= n_ok
        s = np.where(ok[:, None], s, 0.0)

        w = self.xb - X
        sw = np.sum(s * w, axis=1)
        p = w - sw[:, None] * s
        ell = np.linalg.norm(p, axis=1)
        residual = np.where(ok, ell, 0.0)
        penalized = st.ok & ~ok
        over = X[:, 2] - self.xb[:, 2]
        barrier = np.maximum(over, 0.0)
        total = float(np.sum(residual) + self.tir_penalty * np.count_nonzero(penalized) + np.sum(barrier))
        terms = EnergyTerms(total, residual, barrier, ok, st.ok)
        if not want_grad:
            return total, None, terms

        with np.errstate(invalid="ignore", divide="ignore"):
            # zero subgradient where the path already closes to round-off
            phat = np.where((ok & (ell > ZERO_RESIDUAL))[:, None], p / ell[:, None], 0.0)
            g_X = -phat
            g_s = -sw[:, None] * phat
            g_raw = (g_s - np.sum(s * g_s, axis=1)[:, None] * s) / s_norm[:, None]
            dphi = mu - mu * mu * alpha / k
            g_n = phi[:, None] * g_raw + (np.sum(n * g_raw, axis=1) * dphi)[:, None] * L
            g_c = (g_n - np.sum(n * g_n, axis=1)[:, None] * n) * (sign / cn)[:, None]
        g_c = np.where(ok[:, None], g_c, 0.0)
        g_tu = np.cross(tv, g_c)
        g_tv = np.cross(g_c, tu)

        g_X[:, 2] += over > 0
        N = self.size
        grad = np.sum(g_X * self.dirs, axis=1)
        # Scatter tangent gradients onto the stencil points (fixed order, deterministic).
        for idx, vec, sgn in ((st.u_next, g_tu, 1.0), (st.u_prev, g_tu, -1.0),
                              (st.v_next, g_tv, 1.0), (st.v_prev, g_tv, -1.0)):
            proj = sgn * np.sum(vec * self.dirs[idx], axis=1)
            grad += np.bincount(idx, weights=proj, minlength=N)
        return total, grad, terms


def _refract(L, n, mu):
    """Refraction with the intermediates needed by the gradient."""
    with np.errstate(invalid="ignore"):
        alpha = np.sum(L * n, axis=1)
        rad = (1.0 - mu * mu) + mu * mu * (alpha * alpha)
        ok = np.isfinite(alpha) & (alpha > 0) & (rad > 0)
    k = np.sqrt(np.where(ok, rad, 1.0))
    alpha = np.where(ok, alpha, 1.0)
    phi = mu * alpha - k
    raw = -mu * L + np.where(ok[:, None], n, 0.0) * phi[:, None]
    s_norm = np.linalg.norm(raw, axis=1)
    s_norm = np.where(ok, s_norm, 1.0)
    s = raw / s_norm[:, None]
    return s, ok, alpha, k, s_norm, phi


def energy(d, corr: CorrespondenceMap, opts=None) -> float:
    tir = opts.tir_penalty if opts is not None else 10.0
    return LightPathEnergy(corr, tir)(d)


def energy_gradient(d, corr: CorrespondenceMap, opts=None) -> np.ndarray:
    tir = opts.tir_penalty if opts is not None else 10.0
    return LightPathEnergy(corr, tir).value_and_grad(d)[1]
