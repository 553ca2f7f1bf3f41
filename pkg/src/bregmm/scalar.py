"""Global minimization of univariate functions on an interval.

An exhaustive uniform grid search followed by a guarded parabolic
refinement around the incumbent.  This is the engine behind every
separable subproblem; the batched variant runs all coordinates of a
decoupled surrogate at once on a shared grid.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, NumericalError

Array = np.ndarray

#: refinement stops once the bracket is this narrow (relative to |interval|)
BRACKET_TOL = 1e-10

DEFAULT_GRID_N = 2048
DEFAULT_REFINE_STEPS = 8


def parabolic_refine(x_left: float, x_mid: float, x_right: float,
                     f_left: float, f_mid: float, f_right: float) -> float:
    """Vertex of the parabola through three points, clamped to [x_left, x_right].

    Collinear points (zero curvature) fall back to x_mid.
    """
    if not (x_left < x_mid < x_right):
        raise ConfigError("need x_left < x_mid < x_right")
    d1 = (x_mid - x_left) * (f_mid - f_right)
    d2 = (x_mid - x_right) * (f_mid - f_left)
    denom = 2.0 * (d1 - d2)
    if denom == 0.0 or not math.isfinite(denom):
        return x_mid
    num = (x_mid - x_left) ** 2 * (f_mid - f_right) - (x_mid - x_right) ** 2 * (f_mid - f_left)
    vertex = x_mid - num / denom
    if not math.isfinite(vertex):
        return x_mid
    return min(max(vertex, x_left), x_right)


def _vertex_batch(xl, xm, xr, fl, fm, fr):
    """Vectorized parabola vertex with midpoint-of-larger-side fallback."""
    d1 = (xm - xl) * (fm - fr)
    d2 = (xm - xr) * (fm - fl)
    denom = 2.0 * (d1 - d2)
    num = (xm - xl) ** 2 * (fm - fr) - (xm - xr) ** 2 * (fm - fl)
    with np.errstate(divide="ignore", invalid="ignore"):
        vert = xm - num / denom
    bad = ~np.isfinite(vert) | (denom == 0.0)
    # probe the larger subinterval when the fit degenerates
    left_larger = (xm - xl) >= (xr - xm)
    probe = np.where(left_larger, 0.5 * (xl + xm), 0.5 * (xm + xr))
    vert = np.where(bad, probe, vert)
    return np.clip(vert, xl, xr)


def minimize_1d_batch(f_rows: Callable[[Array], Array], lo: Array, hi: Array,
                      grid_n: int = DEFAULT_GRID_N,
                      refine_steps: int = DEFAULT_REFINE_STEPS,
                      anchors: Optional[Array] = None) -> Tuple[Array, Array]:
    """Row-wise global grid search with parabolic refinement.

    ``f_rows`` maps a (n, k) candidate matrix to per-candidate objective
    values; row i is the i-th coordinate's subproblem on [lo_i, hi_i].
    ``anchors`` are extra per-row candidates (the current iterate), which
    guarantees the returned value never exceeds the anchor's.
    +inf marks infeasible candidates; NaN raises.
    """
    if grid_n < 3:
        raise ConfigError("grid_n must be >= 3")
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if np.any(lo >= hi):
        raise ConfigError("need lo < hi per row")
    n = lo.shape[0]

    t = np.linspace(0.0, 1.0, grid_n)
    grid = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    if anchors is not None:
        anchors = np.clip(np.asarray(anchors, dtype=float), lo, hi)
        cand = np.concatenate([grid, anchors[:, None]], axis=1)
    else:
        cand = grid
    vals = np.asarray(f_rows(cand), dtype=float)
    if np.any(np.isnan(vals)):
        i, j = np.argwhere(np.isnan(vals))[0]
        raise NumericalError(f"objective is NaN at x={cand[i, j]!r}", index=int(i))

    best = np.argmin(vals, axis=1)  # first occurrence: ties go to the smaller abscissa
    rows = np.arange(n)
    x_best = cand[rows, best]
    f_best = vals[rows, best]

    if refine_steps <= 0:
        return x_best, f_best

    # bracket around the incumbent; grid spacing bounds the radius, and the
    # anchor column (off-grid) gets the same radius
    spacing = (hi - lo) / (grid_n - 1)
    xl = np.maximum(x_best - spacing, lo)
    xr = np.minimum(x_best + spacing, hi)
    xm = x_best
    fm = f_best

    def eval_col(x):
        return np.asarray(f_rows(x[:, None]), dtype=float)[:, 0]

    fl = eval_col(xl)
    fr = eval_col(xr)
    # degenerate brackets at the box boundary: nudge the flat side inward
    flat_l = xl == xm
    flat_r = xr == xm
    xl = np.where(flat_l, xm - 0.25 * spacing, xl)
    xr = np.where(flat_r, xm + 0.25 * spacing, xr)
    xl = np.maximum(xl, lo)
    xr = np.minimum(xr, hi)
    redo = flat_l | flat_r
    if np.any(redo):
        fl = np.where(flat_l, eval_col(xl), fl)
        fr = np.where(flat_r, eval_col(xr), fr)

    tol = BRACKET_TOL * np.maximum(hi - lo, 1.0)
    for _ in range(refine_steps):
        live = (xr - xl) > tol
        if not np.any(live):
            break
        safe_fl = np.where(np.isfinite(fl), fl, fm + np.abs(fm) + 1.0)
        safe_fr = np.where(np.isfinite(fr), fr, fm + np.abs(fm) + 1.0)
        xc = _vertex_batch(xl, xm, xr, safe_fl, fm, safe_fr)
        # avoid re-evaluating the midpoint itself
        coincide = xc == xm
        xc = np.where(coincide, np.where((xm - xl) >= (xr - xm),
                                         0.5 * (xl + xm), 0.5 * (xm + xr)), xc)
        fc = eval_col(xc)
        if np.any(np.isnan(fc)):
            i = int(np.flatnonzero(np.isnan(fc))[0])
            raise NumericalError(f"objective is NaN at x={xc[i]!r}", index=i)

        better = (fc < fm) & live
        left_side = xc < xm
        # candidate improves: it becomes the new midpoint, old midpoint flanks it
        new_xl = np.where(better, np.where(left_side, xl, xm), np.where(left_side, xc, xl))
        new_fl = np.where(better, np.where(left_side, fl, fm), np.where(left_side, fc, fl))
        new_xr = np.where(better, np.where(left_side, xm, xr), np.where(left_side, xr, xc))
        new_fr = np.where(better, np.where(left_side, fm, fr), np.where(left_side, fr, fc))
        xm = np.where(better, xc, xm)
        fm = np.where(better, fc, fm)
        xl, fl, xr, fr = new_xl, new_fl, new_xr, new_fr

    return xm, fm


def minimize_1d(f: Callable[[Array], Array], interval: Tuple[float, float],
                grid_n: int = DEFAULT_GRID_N,
                refine_steps: int = DEFAULT_REFINE_STEPS,
                include: Optional[Sequence[float]] = None) -> Tuple[float, float]:
    """Globally minimize a univariate function on [a, b].

    The function must be vectorized (ndarray in, ndarray out).  Returns
    (x*, f*) with f* at or below every grid value; ``include`` adds extra
    candidate points (clipped into the interval).
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ConfigError("need a < b")

    def rows(U):
        return f(U[0])[None, :]

    x, fx = minimize_1d_batch(rows, np.array([a]), np.array([b]),
                              grid_n=grid_n, refine_steps=refine_steps)
    best_x, best_f = float(x[0]), float(fx[0])
    if include:
        xs = np.clip(np.asarray(list(include), dtype=float), a, b)
        vals = np.asarray(f(xs), dtype=float)
        if np.any(np.isnan(vals)):
            j = int(np.flatnonzero(np.isnan(vals))[0])
            raise NumericalError(f"objective is NaN at x={xs[j]!r}")
        j = int(np.argmin(vals))
        if vals[j] < best_f:
            best_x, best_f = float(xs[j]), float(vals[j])
    return best_x, best_f
