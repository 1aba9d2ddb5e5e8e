"""Bounded numerical optimization primitives.

Two minimizers back the hyper-parameter and moment-objective updates: a
scalar line search (deterministic probe grid, golden-section bracketing,
gradient bisection refinement) and a box-constrained multivariate minimizer
wrapped around L-BFGS-B.  Both guarantee a feasible result whose objective
value does not exceed the starting value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import NonFiniteError

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Box:
    """Axis-aligned feasible box with strictly ordered bounds."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape:
            raise ValueError("bound shapes differ")
        if not np.all(lower < upper):
            raise ValueError("box requires lower < upper in every coordinate")

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def contains(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) & np.all(x <= self.upper))


def _safe(v: float) -> float:
    return v if np.isfinite(v) else np.inf


def minimize_scalar_bounded(f, df, bounds, x0, *, n_probe=17, xtol=1e-10, max_iter=200):
    """Minimize a scalar function on a closed interval.

    Returns ``(x, f(x))`` with ``f(x) <= f(x0)`` and either a near-stationary
    gradient (``|df(x)| <= 1e-6``) or an active bound.  ``df`` may be ``None``,
    in which case the gradient refinement stage is skipped.

    Raises :class:`NonFiniteError` if ``f(x0)`` is not finite.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    x0 = float(np.clip(x0, lo, hi))
    f0 = float(f(x0))
    if not np.isfinite(f0):
        raise NonFiniteError(f"objective not finite at start x0={x0}: {f0}")

    # Probe grid: cheap insurance against mild multimodality before bracketing.
    grid = np.unique(np.concatenate([np.linspace(lo, hi, n_probe), [x0]]))
    vals = np.array([_safe(float(f(g))) for g in grid])
    k = int(np.argmin(vals))
    xa = grid[max(k - 1, 0)]
    xb = grid[min(k + 1, len(grid) - 1)]

    # Golden-section search within the bracket.
    a, b = float(xa), float(xb)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = _safe(float(f(c))), _safe(float(f(d)))
    it = 0
    while (b - a) > xtol * (1.0 + abs(a) + abs(b)) and it < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _safe(float(f(c)))
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _safe(float(f(d)))
        it += 1
    x_best = c if fc < fd else d
    f_best = min(fc, fd)

    # Gradient bisection refinement around the bracketing minimum.
    if df is not None:
        ga, gb = max(lo, x_best - (b - a)), min(hi, x_best + (b - a))
        if ga < gb:
            dga, dgb = float(df(ga)), float(df(gb))
            if np.isfinite(dga) and np.isfinite(dgb) and dga < 0 < dgb:
                for _ in range(80):
                    mid = 0.5 * (ga + gb)
                    dm = float(df(mid))
                    if not np.isfinite(dm):
                        break
                    if abs(dm) <= 1e-8 or (gb - ga) < 1e-14 * (1.0 + abs(mid)):
                        break
                    if dm > 0:
                        gb = mid
                    else:
                        ga = mid
                mid = 0.5 * (ga + gb)
                fm = _safe(float(f(mid)))
                if fm < f_best:
                    x_best, f_best = mid, fm

    # Never leave the feasible interval or return worse than the start.
    k = int(np.argmin(vals))
    if vals[k] < f_best:
        x_best, f_best = float(grid[k]), float(vals[k])
    if f0 <= f_best:
        return x0, f0
    return float(np.clip(x_best, lo, hi)), float(f_best)


def numerical_gradient(f, x, *, rel_step=1e-7):
    """Central-difference gradient with per-coordinate step max(1e-7, 1e-7 |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = max(rel_step, rel_step * abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def minimize_box(f, grad, box: Box, x0, *, max_iter=500, gtol=1e-5):
    """Minimize a multivariate function over a box.

    Backed by L-BFGS-B; iterates stay inside the box, and the returned point
    never has a higher objective value than ``x0`` (the start is returned if
    the solver fails to improve on it).  ``grad=None`` falls back to central
    finite differences.
    """
    x0 = np.asarray(x0, dtype=float)
    if not box.contains(x0):
        x0 = box.clip(x0)
    f0 = float(f(x0))
    if not np.isfinite(f0):
        raise NonFiniteError(f"objective not finite at start: {f0}")

    def fun(x):
        v = float(f(x))
        return v if np.isfinite(v) else 1e300

    jac = grad if grad is not None else (lambda x: numerical_gradient(fun, x))
    res = _scipy_minimize(
        fun,
        x0,
        jac=jac,
        method="L-BFGS-B",
        bounds=list(zip(box.lower, box.upper)),
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-14},
    )
    x_best = box.clip(np.asarray(res.x, dtype=float))
    f_best = float(f(x_best))
    if not np.isfinite(f_best) or f_best > f0:
        return x0.copy(), f0
    return x_best, f_best
