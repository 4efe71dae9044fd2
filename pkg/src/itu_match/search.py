"""Steady-state equilibrium of matching with search frictions.

Singles meet at Poisson rate ``rho`` times the partner-type stock and
matches dissolve at rate ``delta``.  A meeting turns into a match when
the pair's joint surplus is nonnegative, i.e. when the flow values
``(u_x, v_y)`` of staying single are feasible: ``D_xy(u_x, v_y) <= 0``.
The stationary state solves

    u_x = rho * sum_y mu_0y * max(0, -D_xy(u_x, v_y))
    v_y = rho * sum_x mu_x0 * max(0, -D_xy(u_x, v_y))
    mu_xy = (rho / delta) * mu_x0 * mu_0y * 1{D_xy(u_x, v_y) <= 0}
    n_x = mu_x0 + sum_y mu_xy
    m_y = mu_0y + sum_x mu_xy

with ties ``D = 0`` counting as matched.  The solver is a damped fixed
point that freezes the acceptance indicator within each step; the
acceptance set is re-derived afterwards.  Uniqueness is not guaranteed
by the theory, so the outcome records its initialization and
initializations can be overridden.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._compile import compile_table
from .bargaining import DistanceSpec, evaluate
from .equilibrium import Market, Matching
from .errors import ConvergenceError, ValidationError

__all__ = ["SearchParams", "SearchOutcome", "solve_steady_state", "match_surplus"]


@dataclass(frozen=True)
class SearchParams:
    """Meeting intensity, match destruction intensity and discount rate."""

    rho: float
    delta_destroy: float
    r: float

    def __post_init__(self):
        for name in ("rho", "delta_destroy", "r"):
            val = float(getattr(self, name))
            if not (math.isfinite(val) and val > 0.0):
                raise ValidationError(f"{name} must be finite and strictly positive", field=name)
            object.__setattr__(self, name, val)


@dataclass(frozen=True)
class SearchOutcome:
    """Stationary stocks, flow values of singlehood and the acceptance set."""

    matching: Matching
    u: np.ndarray
    v: np.ndarray
    accept: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def match_surplus(spec: DistanceSpec, u_x: float, v_y: float, params: SearchParams) -> float:
    """Capitalized joint surplus of a meeting given flow values of waiting.

    ``S = -D(u_x, v_y) / (r + delta)``; the pair matches iff ``S >= 0``.
    """
    return -float(evaluate(spec, u_x, v_y)) / (params.r + params.delta_destroy)


def _residuals(table, X, Y, n, m, rho, dlt, u, v, s_x, s_y):
    d = _backend.eval_table(table, np.repeat(u, Y), np.tile(v, X)).reshape(X, Y)
    accept = d <= 0.0
    gain = np.maximum(0.0, -d)
    r_u = u - rho * (s_y[None, :] * gain).sum(axis=1)
    r_v = v - rho * (s_x[:, None] * gain).sum(axis=0)
    mu = (rho / dlt) * np.outer(s_x, s_y) * accept
    r_n = s_x + mu.sum(axis=1) - n
    r_m = s_y + mu.sum(axis=0) - m
    sup = max(np.abs(r_u).max(), np.abs(r_v).max(), np.abs(r_n).max(), np.abs(r_m).max())
    return float(sup), d, accept, gain, mu


def solve_steady_state(
    market: Market,
    params: SearchParams,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    init: tuple | None = None,
) -> SearchOutcome:
    """Damped fixed-point iteration on ``(u, v, mu_x0, mu_0y)``.

    Starts from ``u = v = 0`` with all agents single unless ``init``
    supplies ``(u, v, mu_x0, mu_0y)``.  Each step recomputes the value
    equations and the singles stocks implied by flow balance with the
    acceptance set frozen, then relaxes with a factor that halves
    whenever the residual increases.  Converges when all residual
    families are below ``tol``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    X, Y = market.shape
    n, m = market.n, market.m
    rho, dlt = params.rho, params.delta_destroy
    table = compile_table(market.specs_flat())

    if init is None:
        u = np.zeros(X)
        v = np.zeros(Y)
        s_x = n.copy()
        s_y = m.copy()
        init_label = "u=v=0, singles=populations"
    else:
        u, v, s_x, s_y = (np.asarray(a, dtype=float).copy() for a in init)
        init_label = "user-supplied"
        if u.shape != (X,) or v.shape != (Y,) or s_x.shape != (X,) or s_y.shape != (Y,):
            raise ValidationError("init must be (u, v, mu_x0, mu_0y) with market shapes", field="init")

    omega = 0.5
    residual, d, accept, gain, mu = _residuals(table, X, Y, n, m, rho, dlt, u, v, s_x, s_y)
    history = [residual]
    flips = 0
    for iterations in range(1, max_iter + 1):
        if residual <= tol:
            break
        u_t = rho * (s_y[None, :] * gain).sum(axis=1)
        v_t = rho * (s_x[:, None] * gain).sum(axis=0)
        s_x_t = n / (1.0 + (rho / dlt) * (s_y[None, :] * accept).sum(axis=1))
        s_y_t = m / (1.0 + (rho / dlt) * (s_x[:, None] * accept).sum(axis=0))
        u_new = (1.0 - omega) * u + omega * u_t
        v_new = (1.0 - omega) * v + omega * v_t
        s_x_new = (1.0 - omega) * s_x + omega * s_x_t
        s_y_new = (1.0 - omega) * s_y + omega * s_y_t
        new_res, d, accept_new, gain, mu = _residuals(table, X, Y, n, m, rho, dlt, u_new, v_new, s_x_new, s_y_new)
        if accept_new.sum() != accept.sum() or not np.array_equal(accept_new, accept):
            flips += 1
        accept = accept_new
        if new_res > residual:
            omega = max(omega * 0.5, 1e-3)
        else:
            omega = min(omega * 1.05, 0.5)
        u, v, s_x, s_y = u_new, v_new, s_x_new, s_y_new
        residual = new_res
        history.append(residual)
    else:
        raise ConvergenceError(
            f"steady-state iteration did not reach tol={tol} in {max_iter} steps",
            residual=residual,
            history=history[-50:],
        )

    matching = Matching(mu_xy=mu, mu_x0=s_x, mu_0y=s_y)
    diagnostics = {
        "iterations": iterations,
        "residual": residual,
        "relaxation": omega,
        "initialization": init_label,
        "acceptance_flips": flips,
        "residual_history": history[-200:],
    }
    return SearchOutcome(matching=matching, u=u, v=v, accept=accept, diagnostics=diagnostics)
