"""Aggregate equilibrium of a two-sided market with taste heterogeneity.

A market holds type populations ``n_x`` and ``m_y`` and one bargaining
technology per ``(x, y)`` pair.  With logit heterogeneity at temperature
``sigma`` the unique interior equilibrium is characterized by the
rebalancing system

    n_x = mu_x0 + sum_y M_xy(mu_x0, mu_0y)
    m_y = mu_0y + sum_x M_xy(mu_x0, mu_0y)

in the singles masses, with the matching function ``M`` of
:mod:`itu_match.matchfn`.  Two independent solvers are provided:

``solve_ipfp``
    Alternating one-sided rebalancing (a nonlinear Iterative
    Proportional Fitting / Sinkhorn scheme).  Works for every supported
    technology and any ``sigma > 0``; the ``mu_0y`` iterates decrease
    monotonically from ``m_y``, mirroring deferred acceptance.

``solve_jacobi``
    Price adjustment on the wedges ``W_xy = U_xy - V_xy``.  Each cell is
    a good whose supply (men) and demand (women) come from logit choice;
    excess demand has the gross-substitutes sign pattern, so per-cell
    root solves from a high starting price converge monotonically.
    Defined at ``sigma = 1``; requires the admissible wedge intervals to
    be consistently finite or infinite across each row and column.

Both produce an :class:`EquilibriumOutcome` (matching, systematic
utilities, wedges, diagnostics); :func:`verify` recomputes all
equilibrium residuals from scratch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _backend
from . import bargaining as bg
from ._compile import compile_table
from .errors import ConvergenceError, DomainError, InitializationError, ValidationError

__all__ = [
    "Market",
    "Matching",
    "EquilibriumOutcome",
    "VerificationReport",
    "solve_ipfp",
    "solve_jacobi",
    "excess_demand",
    "verify",
    "market_to_dict",
    "market_from_dict",
]


@dataclass(frozen=True)
class Market:
    """Type populations plus one bargaining technology per pair.

    ``tech`` maps ``(x_label, y_label)`` to a :class:`DistanceSpec`; a
    single spec may be passed to apply one technology to all pairs.
    """

    men_types: tuple[str, ...]
    women_types: tuple[str, ...]
    n: np.ndarray
    m: np.ndarray
    tech: Mapping[tuple[str, str], bg.DistanceSpec] | bg.DistanceSpec
    sigma: float = 1.0

    def __post_init__(self):
        men = tuple(str(x) for x in self.men_types)
        women = tuple(str(y) for y in self.women_types)
        if len(men) < 1 or len(women) < 1:
            raise ValidationError("need at least one type on each side", field="men_types")
        if len(set(men)) != len(men) or len(set(women)) != len(women):
            raise ValidationError("type labels must be unique", field="men_types")
        n = np.asarray(self.n, dtype=float).reshape(-1)
        m = np.asarray(self.m, dtype=float).reshape(-1)
        if n.shape != (len(men),) or m.shape != (len(women),):
            raise ValidationError("population vectors must match the type lists", field="n")
        if not (np.all(np.isfinite(n)) and np.all(n > 0)):
            raise ValidationError("all masses n_x must be finite and strictly positive", field="n")
        if not (np.all(np.isfinite(m)) and np.all(m > 0)):
            raise ValidationError("all masses m_y must be finite and strictly positive", field="m")
        sigma = float(self.sigma)
        if not (sigma > 0.0 and math.isfinite(sigma)):
            raise ValidationError("sigma must be finite and strictly positive", field="sigma")
        if isinstance(self.tech, bg.DistanceSpec):
            tech = {(x, y): self.tech for x in men for y in women}
        else:
            tech = dict(self.tech)
            for x in men:
                for y in women:
                    if (x, y) not in tech:
                        raise ValidationError(f"missing technology for pair ({x!r}, {y!r})", field="tech")
                    if not isinstance(tech[(x, y)], bg.DistanceSpec):
                        raise ValidationError(f"tech for ({x!r}, {y!r}) is not a DistanceSpec", field="tech")
        n.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "men_types", men)
        object.__setattr__(self, "women_types", women)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "tech", tech)
        object.__setattr__(self, "sigma", sigma)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.men_types), len(self.women_types)

    def spec(self, x_idx: int, y_idx: int) -> bg.DistanceSpec:
        return self.tech[(self.men_types[x_idx], self.women_types[y_idx])]

    def specs_flat(self) -> list[bg.DistanceSpec]:
        """Row-major list of pair technologies."""
        return [self.tech[(x, y)] for x in self.men_types for y in self.women_types]


@dataclass(frozen=True)
class Matching:
    """Masses of matched pairs and singles."""

    mu_xy: np.ndarray
    mu_x0: np.ndarray
    mu_0y: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu_xy, dtype=float)
        x0 = np.asarray(self.mu_x0, dtype=float).reshape(-1)
        y0 = np.asarray(self.mu_0y, dtype=float).reshape(-1)
        if mu.ndim != 2 or mu.shape != (x0.size, y0.size):
            raise ValidationError("mu_xy must be a matrix conformable with the singles vectors", field="mu_xy")
        if np.any(mu < 0) or np.any(x0 < 0) or np.any(y0 < 0):
            raise ValidationError("matching masses must be nonnegative", field="mu_xy")
        for a in (mu, x0, y0):
            a.setflags(write=False)
        object.__setattr__(self, "mu_xy", mu)
        object.__setattr__(self, "mu_x0", x0)
        object.__setattr__(self, "mu_0y", y0)

    @property
    def interior(self) -> bool:
        return bool(np.all(self.mu_xy > 0) and np.all(self.mu_x0 > 0) and np.all(self.mu_0y > 0))

    def accounting_residuals(self, market: Market) -> tuple[float, float]:
        rx = np.abs(self.mu_x0 + self.mu_xy.sum(axis=1) - market.n)
        ry = np.abs(self.mu_0y + self.mu_xy.sum(axis=0) - market.m)
        return float(rx.max()), float(ry.max())


@dataclass(frozen=True)
class EquilibriumOutcome:
    """A matching plus the systematic utilities and wedges that support it."""

    matching: Matching
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class VerificationReport:
    """Sup-norm equilibrium residuals; a report, not a judgment."""

    accounting_x: float
    accounting_y: float
    feasibility: float
    matching_function: float
    interiority_min: float

    def max_residual(self) -> float:
        return max(self.accounting_x, self.accounting_y, self.feasibility, self.matching_function)


def _reject_dagsvik_menzel(variant: str):
    if variant == "dagsvik_menzel":
        raise ValidationError(
            "the Dagsvik-Menzel matching function is evaluation-only: it is not "
            "homogeneous of degree one and is outside the solvers' convergence theory",
            field="variant",
        )


def _match_matrix(table, sigma, mu_x0, mu_0y, X, Y, grad=False):
    u = np.repeat(-sigma * np.log(mu_x0), Y)
    v = np.tile(-sigma * np.log(mu_0y), X)
    if grad:
        d, du, dv = _backend.eval_table(table, u, v, grad=True)
        m = np.exp(-d / sigma).reshape(X, Y)
        return m, du.reshape(X, Y), dv.reshape(X, Y)
    d = _backend.eval_table(table, u, v)
    return np.exp(-d / sigma).reshape(X, Y)


def solve_ipfp(
    market: Market,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    variant: str = "generic",
) -> EquilibriumOutcome:
    """Solve for the unique equilibrium by alternating one-sided rebalancing.

    Starting from ``mu_0y = m_y``, each pass solves every man type's
    rebalancing equation (strictly increasing in ``mu_x0``, safeguarded
    Newton in log space), then every woman type's.  Iterates until both
    ``sup_y |mu_0y^t - mu_0y^{t-1}| < tol`` and the accounting residuals
    are below ``tol``.  The ``mu_0y`` trajectory is nonincreasing; the
    largest observed increase is reported in the diagnostics.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    _reject_dagsvik_menzel(variant)
    X, Y = market.shape
    sigma = market.sigma
    table = compile_table(market.specs_flat())

    log_n = np.log(market.n)
    log_m = np.log(market.m)
    l_x = log_n.copy()
    l_y = log_m.copy()
    ftol_x = 1e-14 * np.maximum(1.0, market.n)
    ftol_y = 1e-14 * np.maximum(1.0, market.m)

    worst_increase = 0.0
    iterations = 0
    sup_dy = math.inf
    for iterations in range(1, max_iter + 1):
        l_x = _backend.ipfp_sweep(table, X, Y, True, sigma, market.n, -sigma * l_y, l_x, ftol_x)
        l_y_new = _backend.ipfp_sweep(table, X, Y, False, sigma, market.m, -sigma * l_x, l_y, ftol_y)
        mu_prev = np.exp(l_y)
        mu_new = np.exp(l_y_new)
        worst_increase = max(worst_increase, float(np.max(mu_new - mu_prev)))
        sup_dy = float(np.max(np.abs(mu_new - mu_prev)))
        l_y = l_y_new
        if sup_dy < tol:
            mu_x0 = np.exp(l_x)
            mu_0y = np.exp(l_y)
            mu = _match_matrix(table, sigma, mu_x0, mu_0y, X, Y)
            acc_x = float(np.max(np.abs(mu_x0 + mu.sum(axis=1) - market.n)))
            acc_y = float(np.max(np.abs(mu_0y + mu.sum(axis=0) - market.m)))
            if max(acc_x, acc_y) <= tol:
                break
    else:
        raise ConvergenceError(
            f"rebalancing did not reach tol={tol} in {max_iter} iterations",
            residual=sup_dy,
        )

    U = sigma * (np.log(mu) - np.log(mu_x0)[:, None])
    V = sigma * (np.log(mu) - np.log(mu_0y)[None, :])
    matching = Matching(mu_xy=mu, mu_x0=mu_x0, mu_0y=mu_0y)
    diagnostics = {
        "solver": "ipfp",
        "iterations": iterations,
        "backend": _backend.BACKEND_NAME,
        "final_step": sup_dy,
        "accounting_x": acc_x,
        "accounting_y": acc_y,
        "monotone_violation": worst_increase,
    }
    return EquilibriumOutcome(matching=matching, U=U, V=V, W=U - V, diagnostics=diagnostics)


def _wedge_bounds_arrays(market: Market):
    X, Y = market.shape
    lo = np.empty((X, Y))
    hi = np.empty((X, Y))
    for i in range(X):
        for j in range(Y):
            b = bg.wedge_bounds(market.spec(i, j))
            lo[i, j], hi[i, j] = b.lower, b.upper
    return lo, hi


def _check_assumption_wedges(lo, hi):
    """Rows must agree on upper finiteness, columns on lower finiteness."""
    up_fin = np.isfinite(hi)
    lo_fin = np.isfinite(lo)
    for i, row in enumerate(up_fin):
        if row.any() and not row.all():
            raise ValidationError(
                f"row {i}: upper wedge bounds mix finite and infinite across partners",
                field="tech",
            )
    for j, col in enumerate(lo_fin.T):
        if col.any() and not col.all():
            raise ValidationError(
                f"column {j}: lower wedge bounds mix finite and infinite across partners",
                field="tech",
            )


def excess_demand(market: Market, W: np.ndarray) -> np.ndarray:
    """Excess demand ``Z = grad H(V(W)) - grad G(U(W))`` cell by cell.

    Positive entries mean women demand more ``xy`` matches than men
    supply at the current wedges.  ``W`` must lie strictly inside every
    pair's admissible wedge interval.
    """
    if market.sigma != 1.0:
        raise ValidationError("excess demand is defined at sigma = 1", field="sigma")
    X, Y = market.shape
    W = np.asarray(W, dtype=float)
    if W.shape != (X, Y):
        raise ValidationError(f"W must have shape {(X, Y)}", field="W")
    lo, hi = _wedge_bounds_arrays(market)
    if np.any(W <= lo) or np.any(W >= hi):
        raise DomainError("a wedge lies outside its admissible open interval")
    table = compile_table(market.specs_flat())
    return _excess_demand_core(table, W, market.n, market.m)


def _excess_demand_core(table, W, n, m):
    X, Y = len(n), len(m)
    Wf = W.ravel()
    U = (-_backend.eval_table(table, np.zeros_like(Wf), -Wf)).reshape(X, Y)
    V = U - W
    # log-space softmax: stable for arbitrarily large utilities
    lse_u = np.logaddexp(0.0, np.logaddexp.reduce(U, axis=1))[:, None]
    lse_v = np.logaddexp(0.0, np.logaddexp.reduce(V, axis=0))[None, :]
    supply = n[:, None] * np.exp(U - lse_u)
    demand = m[None, :] * np.exp(V - lse_v)
    return demand - supply


def solve_jacobi(
    market: Market,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    variant: str = "generic",
) -> EquilibriumOutcome:
    """Solve for the wedges by per-cell price adjustment from above.

    Initialization puts every wedge at its finite upper bound (minus a
    safety margin) or grows ``2^k`` until excess demand is nonpositive
    everywhere.  Each sweep then solves every cell's excess-demand
    equation with the other wedges frozen; iterates until both
    ``sup |W^t - W^{t-1}| < tol`` and ``||Z(W)||_inf <= tol``.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive", field="tol")
    _reject_dagsvik_menzel(variant)
    if market.sigma != 1.0:
        raise ValidationError(
            "the wedge solver is defined at sigma = 1; use solve_ipfp for other temperatures",
            field="sigma",
        )
    X, Y = market.shape
    table = compile_table(market.specs_flat())
    lo, hi = _wedge_bounds_arrays(market)
    _check_assumption_wedges(lo, hi)

    eps_lo = np.where(np.isfinite(lo), 1e-8 * np.maximum(1.0, np.abs(lo)), 0.0)
    eps_hi = np.where(np.isfinite(hi), 1e-8 * np.maximum(1.0, np.abs(hi)), 0.0)
    clamp_lo = lo + eps_lo
    clamp_hi = hi - eps_hi

    scale = max(float(market.n.max()), float(market.m.max()))
    z_slack = 1e-12 * scale

    W = np.where(np.isfinite(hi), clamp_hi, 1.0)
    free = ~np.isfinite(hi)
    for k in range(61):
        Z = _excess_demand_core(table, W, market.n, market.m)
        if np.all(Z <= z_slack):
            break
        if not free.any():
            raise InitializationError(
                "cannot reach nonpositive excess demand: wedges are clamped by finite bounds"
            )
        W = np.where(free, float(2.0**k), W)
    else:
        raise InitializationError(
            "could not find a starting wedge vector with nonpositive excess demand within the 2^60 budget"
        )

    ztol_inner = 1e-16 * scale
    sup_dw = math.inf
    for iterations in range(1, max_iter + 1):
        W_new = _backend.jacobi_sweep(
            table, W, market.n, market.m, clamp_lo.ravel(), clamp_hi.ravel(), ztol_inner
        ).reshape(X, Y)
        sup_dw = float(np.max(np.abs(W_new - W)))
        W = W_new
        if sup_dw < tol:
            z_norm = float(np.max(np.abs(_excess_demand_core(table, W, market.n, market.m))))
            if z_norm <= max(tol, 10.0 * ztol_inner):
                break
    else:
        raise ConvergenceError(
            f"wedge iteration did not reach tol={tol} in {max_iter} sweeps", residual=sup_dw
        )

    Wf = W.ravel()
    U = (-_backend.eval_table(table, np.zeros_like(Wf), -Wf)).reshape(X, Y)
    V = U - W
    eU = np.exp(U)
    eV = np.exp(V)
    den_u = 1.0 + eU.sum(axis=1)
    den_v = 1.0 + eV.sum(axis=0)
    mu = market.n[:, None] * eU / den_u[:, None]
    mu_x0 = market.n / den_u
    mu_0y = market.m / den_v
    matching = Matching(mu_xy=mu, mu_x0=mu_x0, mu_0y=mu_0y)
    diagnostics = {
        "solver": "jacobi",
        "iterations": iterations,
        "backend": _backend.BACKEND_NAME,
        "final_step": sup_dw,
        "excess_demand_norm": z_norm,
    }
    return EquilibriumOutcome(matching=matching, U=U, V=V, W=W, diagnostics=diagnostics)


def verify(market: Market, outcome: EquilibriumOutcome) -> VerificationReport:
    """Recompute all equilibrium residuals of an outcome from scratch.

    Reports sup-norms of (a) the accounting identities, (b) frontier
    feasibility ``D(U, V) = 0``, (c) consistency of ``mu_xy`` with the
    matching function evaluated at the singles masses, and the smallest
    mass entry as an interiority measure.
    """
    X, Y = market.shape
    table = compile_table(market.specs_flat())
    mt = outcome.matching
    acc_x, acc_y = mt.accounting_residuals(market)
    d = _backend.eval_table(table, outcome.U.ravel(), outcome.V.ravel())
    feas = float(np.max(np.abs(d)))
    if np.all(mt.mu_x0 > 0) and np.all(mt.mu_0y > 0):
        m_implied = _match_matrix(table, market.sigma, mt.mu_x0, mt.mu_0y, X, Y)
        mf = float(np.max(np.abs(mt.mu_xy - m_implied)))
    else:
        mf = math.inf
    interior = float(min(mt.mu_xy.min(), mt.mu_x0.min(), mt.mu_0y.min()))
    return VerificationReport(
        accounting_x=acc_x,
        accounting_y=acc_y,
        feasibility=feas,
        matching_function=mf,
        interiority_min=interior,
    )


# ---------------------------------------------------------------------------
# JSON schema


def market_to_dict(market: Market) -> dict:
    return {
        "men": [{"label": x, "n": float(nx)} for x, nx in zip(market.men_types, market.n)],
        "women": [{"label": y, "m": float(my)} for y, my in zip(market.women_types, market.m)],
        "tech": {
            f"{x}|{y}": bg.spec_to_dict(market.tech[(x, y)])
            for x in market.men_types
            for y in market.women_types
        },
        "sigma": market.sigma,
    }


def market_from_dict(data: dict) -> Market:
    try:
        men = [(str(e["label"]), float(e["n"])) for e in data["men"]]
        women = [(str(e["label"]), float(e["m"])) for e in data["women"]]
    except (KeyError, TypeError) as exc:
        raise ValidationError("market needs 'men' and 'women' lists with labels and masses", field="men") from exc
    tech_raw = data.get("tech")
    if not isinstance(tech_raw, dict):
        raise ValidationError("market needs a 'tech' object keyed by '<x>|<y>'", field="tech")
    tech = {}
    for key, spec_data in tech_raw.items():
        parts = key.split("|")
        if len(parts) != 2:
            raise ValidationError(f"bad tech key {key!r}, expected '<x>|<y>'", field="tech")
        tech[(parts[0], parts[1])] = bg.spec_from_dict(spec_data)
    return Market(
        men_types=tuple(x for x, _ in men),
        women_types=tuple(y for y, _ in women),
        n=np.array([v for _, v in men]),
        m=np.array([v for _, v in women]),
        tech=tech,
        sigma=float(data.get("sigma", 1.0)),
    )
