"""Vectorized safeguarded scalar root finding.

All solvers in this package reduce to families of independent monotone
scalar equations; this helper solves them componentwise with bracketed
Newton and bisection fallback.
"""

from __future__ import annotations

import numpy as np


def solve_monotone(
    f_and_fp,
    x0: np.ndarray,
    *,
    decreasing: bool = False,
    free: np.ndarray | None = None,
    ftol: np.ndarray | float = 1e-14,
    max_expand: int = 60,
    max_iter: int = 200,
) -> np.ndarray:
    """Roots of componentwise monotone equations ``f(x) = 0``.

    ``f_and_fp(x)`` evaluates all components at once and returns
    ``(f, fprime)``; ``fprime`` may be ``None`` to force bisection.
    Brackets are grown geometrically from ``x0`` in both directions,
    then a Newton iteration clipped to the bracket (midpoint fallback)
    runs until ``|f| <= ftol`` everywhere.  Components with
    ``free=False``, and components whose equation has no root within
    the expansion budget (a bounded residual that never changes sign),
    are left at their initial value.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    free = np.ones(n, dtype=bool) if free is None else np.asarray(free, dtype=bool)
    ftol = np.broadcast_to(np.asarray(ftol, dtype=float), x0.shape)
    sgn = -1.0 if decreasing else 1.0

    def g(x):
        fv, fp = f_and_fp(x)
        fv = sgn * np.asarray(fv, dtype=float)
        fp = None if fp is None else sgn * np.asarray(fp, dtype=float)
        return fv, fp

    # grow brackets: lo with g <= 0, hi with g >= 0 (g is increasing)
    lo = x0.copy()
    hi = x0.copy()
    g_lo, _ = g(lo)
    g_hi = g_lo.copy()
    step = np.ones(n)
    for _ in range(max_expand):
        bad = free & (g_lo > 0.0)
        if not bad.any():
            break
        lo = np.where(bad, lo - step, lo)
        step = np.where(bad, 2.0 * step, step)
        g_lo, _ = g(lo)
    step = np.ones(n)
    for _ in range(max_expand):
        bad = free & (g_hi < 0.0)
        if not bad.any():
            break
        hi = np.where(bad, hi + step, hi)
        step = np.where(bad, 2.0 * step, step)
        g_hi, _ = g(hi)

    free = free & (g_lo <= 0.0) & (g_hi >= 0.0)
    x = np.where(free, 0.5 * (lo + hi), x0)
    for _ in range(max_iter):
        fv, fp = g(x)
        done = (np.abs(fv) <= ftol) | ~free
        if done.all():
            break
        lo = np.where(free & (fv < 0.0), x, lo)
        hi = np.where(free & (fv > 0.0), x, hi)
        if fp is not None:
            with np.errstate(all="ignore"):
                newton = x - fv / fp
            ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        else:
            ok = np.zeros(n, dtype=bool)
        x = np.where(done, x, np.where(ok, newton, 0.5 * (lo + hi)))
        if float(np.max(hi - lo)) < 1e-16:
            break
    return x
