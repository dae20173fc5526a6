"""Limited-memory BFGS with a strong-Wolfe line search.

Steps that leave the feasible set (``feasible(x)`` False, e.g. a non-positive
depth) are treated as infinitely bad, so the line search backtracks from them.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

FunGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

C1 = 1e-4
C2 = 0.9
MAX_LINE_SEARCH_EVALS = 40


@dataclass
class IterationRecord:
    iteration: int
    energy: float
    grad_inf_norm: float
    step_length: float


@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    iterations: int
    converged: bool
    message: str
    history: list[IterationRecord] = field(default_factory=list)
    n_evals: int = 0


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


class _LineFunction:
    """phi(alpha) = f(x + alpha p) with caching of the best evaluated point."""

    def __init__(self, fun: FunGrad, x, p, feasible):
        self.fun, self.x, self.p, self.feasible = fun, x, p, feasible
        self.evals = 0

    def __call__(self, alpha: float):
        xa = self.x + alpha * self.p
        if self.feasible is not None and not self.feasible(xa):
            return np.inf, np.nan, xa, None
        self.evals += 1
        f, g = self.fun(xa)
        if not np.isfinite(f):
            return np.inf, np.nan, xa, None
        return f, float(g @ self.p), xa, g


def strong_wolfe(fun: FunGrad, x, f0, g0, p, alpha0=1.0, feasible=None,
                 c1=C1, c2=C2, max_evals=MAX_LINE_SEARCH_EVALS):
    """Bracketing/zoom line search.

    Returns ``(alpha, f, x, g, wolfe_ok, evals)``.  If the strong Wolfe
    conditions cannot be met, the best point satisfying sufficient decrease is
    returned with ``wolfe_ok`` False; ``alpha`` is None when no such point
    was found.
    """
    phi = _LineFunction(fun, x, p, feasible)
    dphi0 = float(g0 @ p)
    best = None  # (f, alpha, x, g) with sufficient decrease

    def armijo(alpha, fa):
        return fa <= f0 + c1 * alpha * dphi0

    def note(alpha, fa, xa, ga):
        nonlocal best
        if np.isfinite(fa) and armijo(alpha, fa) and (best is None or fa < best[0]):
            best = (fa, alpha, xa, ga)

    def finish_best():
        if best is None:
            return None, f0, x, g0, False, phi.evals
        fa, alpha, xa, ga = best
        return alpha, fa, xa, ga, False, phi.evals

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while phi.evals < max_evals:
            a = None
            if np.isfinite(f_hi) and np.isfinite(d_hi):
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not (left + margin <= a <= right - margin):
                a = 0.5 * (lo + hi)
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
            fa, da, xa, ga = phi(a)
            note(a, fa, xa, ga)
            if not armijo(a, fa) or fa >= f_lo:
                hi, f_hi, d_hi = a, fa, da
            else:
                if abs(da) <= -c2 * dphi0:
                    return a, fa, xa, ga, True, phi.evals
                if da * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, fa, da
        return finish_best()

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    first = True
    while phi.evals < max_evals:
        fa, da, xa, ga = phi(a)
        note(a, fa, xa, ga)
        if not armijo(a, fa) or (not first and fa >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, fa, da)
        if abs(da) <= -c2 * dphi0:
            return a, fa, xa, ga, True, phi.evals
        if da >= 0:
            return zoom(a, fa, da, a_prev, f_prev, d_prev)
        a_prev, f_prev, d_prev = a, fa, da
        a *= 2.0
        first = False
    return finish_best()


def lbfgs_minimize(fun: FunGrad, x0, max_iterations: int = 500, energy_tolerance: float = 1e-9,
                   gradient_tolerance: float = 1e-7, memory: int = 10,
                   feasible: Callable[[np.ndarray], bool] | None = None,
                   callback: Callable[[IterationRecord], None] | None = None) -> LBFGSResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops when the accepted energy changes by less than ``energy_tolerance``,
    when the gradient infinity norm drops below ``gradient_tolerance`` (both
    count as converged) or after ``max_iterations``.  A failed line search
    restarts from steepest descent once; a second failure ends the run with
    ``converged=False`` and the best iterate so far.

    ``history[0]`` describes the starting point (step length 0).
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    n_evals = 1
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    history = [IterationRecord(0, float(f), float(np.max(np.abs(g), initial=0.0)), 0.0)]
    if callback:
        callback(history[-1])
    if history[0].grad_inf_norm < gradient_tolerance:
        return LBFGSResult(x, float(f), 0, True, "gradient below tolerance", history, n_evals)

    s_hist: deque[np.ndarray] = deque(maxlen=memory)
    y_hist: deque[np.ndarray] = deque(maxlen=memory)
    rho_hist: deque[float] = deque(maxlen=memory)
    converged = False
    message = "maximum iterations reached"
    retried = False
    it = 0
    while it < max_iterations:
        q = -g
        if s_hist:
            alphas = []
            for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
                a = rho * (s @ q)
                alphas.append(a)
                q = q - a * y
            gamma = (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
            q = gamma * q
            for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
                b = rho * (y @ q)
                q = q + (a - b) * s
            alpha0 = 1.0
        else:
            alpha0 = min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))
        p = q
        if g @ p >= 0:
            s_hist.clear(); y_hist.clear(); rho_hist.clear()
            p = -g
            alpha0 = min(1.0, 1.0 / max(np.linalg.norm(g), 1e-300))

        alpha, f_new, x_new, g_new, wolfe_ok, evals = strong_wolfe(fun, x, f, g, p, alpha0, feasible)
        n_evals += evals
        if alpha is None:
            if s_hist and not retried:
                logger.debug("line search failed at iteration %d; resetting memory", it)
                s_hist.clear(); y_hist.clear(); rho_hist.clear()
                retried = True
                continue
            message = "line search failed"
            break
        retried = False
        it += 1
        step = x_new - x
        ydiff = g_new - g
        sy = step @ ydiff
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(ydiff):
            s_hist.append(step)
            y_hist.append(ydiff)
            rho_hist.append(1.0 / sy)
        df = f - f_new
        x, f, g = x_new, f_new, g_new
        rec = IterationRecord(it, float(f), float(np.max(np.abs(g))), float(alpha * np.linalg.norm(p)))
        history.append(rec)
        if callback:
            callback(rec)
        if abs(df) < energy_tolerance:
            converged, message = True, "energy change below tolerance"
            break
        if rec.grad_inf_norm < gradient_tolerance:
            converged, message = True, "gradient below tolerance"
            break
    return LBFGSResult(x, float(f), it, converged, message, history, n_evals)
