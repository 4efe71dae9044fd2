"""Matching function equilibrium when everyone must match.

Without an outside option the log-odds trick no longer identifies the
systematic utilities, but the matching masses still satisfy

    mu_xy = exp(-D_xy(a_x, b_y))

for per-type fixed effects ``a_x``, ``b_y`` solving the accounting system

    sum_y mu_xy = n_x   and   sum_x mu_xy = m_y.

The system carries one redundancy (both equation blocks sum to the total
population), so one fixed effect is pinned to a reference value; the
matching is invariant to which coordinate is pinned and to the pinned
value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from . import bargaining as bg
from ._compile import compile_table
from ._scalar import solve_monotone
from .equilibrium import Market, Matching
from .errors import ConvergenceError, ValidationError

__all__ = ["FixedEffects", "solve_full"]


@dataclass(frozen=True)
class FixedEffects:
    """Per-type fixed effects with the pinned coordinate recorded.

    ``normalization`` is ``(side, index, value)`` with side ``"x"`` or
    ``"y"``; the pinned coordinate holds ``value`` exactly.
    """

    a: np.ndarray
    b: np.ndarray
    normalization: tuple[str, int, float]

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def _probe_strict_isotonicity(market: Market):
    pts = [-5.0, 0.0, 5.0]
    for x in range(market.shape[0]):
        for y in range(market.shape[1]):
            spec = market.spec(x, y)
            for p in pts:
                for q in pts:
                    du, dv = bg.partials(spec, p, q)
                    if du <= 0.0 or dv <= 0.0:
                        warnings.warn(
                            "a pair technology has a flat frontier segment; the "
                            "full-assignment fixed point may fail to be unique",
                            RuntimeWarning,
                            stacklevel=3,
                        )
                        return


def solve_full(
    market: Market,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    pin: tuple[str, int] = ("x", 0),
    pin_value: float = 0.0,
) -> tuple[Matching, FixedEffects]:
    """Solve the full-assignment system by alternating per-type solves.

    Populations must balance within ``1e-9`` relative (``m`` is rescaled
    to exact balance internally).  Each pass solves every free ``a_x``
    from its row equation (strictly decreasing in ``a_x``), then every
    free ``b_y`` from its column equation; the pinned coordinate stays at
    ``pin_value``, its equation being implied by the others at the fixed
    point.  Converges when all row and column residuals are ``<= tol``.

    The accounting system fixes the effects only up to a one-dimensional
    family.  With constant-slope frontiers (TU, or LTU with one common
    ``lam/zeta``) the matching is the same at every point of the family
    and any pin works; with curved or heterogeneous-slope frontiers the
    pin selects a genuinely different equilibrium, and a ``pin_value``
    outside the family's coordinate range makes the system insolvable
    (reported as a stall in the :class:`ConvergenceError`).
    """
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    if market.sigma != 1.0:
        raise ValidationError("full assignment is defined at sigma = 1", field="sigma")
    X, Y = market.shape
    n = market.n.copy()
    total_n, total_m = float(n.sum()), float(market.m.sum())
    if abs(total_n - total_m) > 1e-9 * max(total_n, total_m):
        raise ValidationError(
            f"full assignment needs balanced populations, got sum n = {total_n} vs sum m = {total_m}",
            field="m",
        )
    m = market.m * (total_n / total_m)

    side, idx = pin
    if side not in ("x", "y"):
        raise ValidationError("pin side must be 'x' or 'y'", field="pin")
    if (side == "x" and not 0 <= idx < X) or (side == "y" and not 0 <= idx < Y):
        raise ValidationError("pin index out of range", field="pin")

    _probe_strict_isotonicity(market)
    table = compile_table(market.specs_flat())

    a = np.zeros(X)
    b = np.zeros(Y)
    if side == "x":
        a[idx] = pin_value
    else:
        b[idx] = pin_value
    free_x = np.ones(X, dtype=bool)
    free_y = np.ones(Y, dtype=bool)
    if side == "x":
        free_x[idx] = False
    else:
        free_y[idx] = False

    def mu_and_grads(a_vec, b_vec):
        u = np.repeat(a_vec, Y)
        v = np.tile(b_vec, X)
        d, du, dv = _backend.eval_table(table, u, v, grad=True)
        mu = np.exp(-d).reshape(X, Y)
        return mu, du.reshape(X, Y), dv.reshape(X, Y)

    residual = math.inf
    best = math.inf
    since_improvement = 0
    for iterations in range(1, max_iter + 1):
        def row_f(av):
            mu, du, _ = mu_and_grads(av, b)
            return mu.sum(axis=1) - n, -(mu * du).sum(axis=1)

        a = solve_monotone(row_f, a, decreasing=True, free=free_x, ftol=1e-14 * np.maximum(1.0, n))

        def col_f(bv):
            mu, _, dv = mu_and_grads(a, bv)
            return mu.sum(axis=0) - m, -(mu * dv).sum(axis=0)

        b = solve_monotone(col_f, b, decreasing=True, free=free_y, ftol=1e-14 * np.maximum(1.0, m))

        mu = mu_and_grads(a, b)[0]
        r_rows = np.abs(mu.sum(axis=1) - n)
        r_cols = np.abs(mu.sum(axis=0) - m)
        residual = float(max(r_rows.max(), r_cols.max()))
        if residual <= tol:
            break
        if residual < 0.9 * best:
            best = residual
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= 300:
                raise ConvergenceError(
                    f"full-assignment iteration stalled at residual {residual:.3e} "
                    "(a per-type equation may have no admissible solution)",
                    residual=residual,
                )
    else:
        raise ConvergenceError(
            f"full-assignment iteration did not reach tol={tol} in {max_iter} sweeps",
            residual=residual,
        )

    matching = Matching(mu_xy=mu, mu_x0=np.zeros(X), mu_0y=np.zeros(Y))
    effects = FixedEffects(a=a, b=b, normalization=(side, idx, float(pin_value)))
    return matching, effects
