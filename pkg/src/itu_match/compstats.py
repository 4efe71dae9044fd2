"""First-order comparative statics of the equilibrium in the populations.

Around an interior equilibrium, an infinitesimal change ``(dn, dm)`` in
the type populations moves the matching by

    dmu = (Du Hg + Dv Hh)^(-1) [ Du Hg (mu dn / n) + Dv Hh (mu dm / m) ]

where ``Du``/``Dv`` are diagonal matrices of distance partials at the
equilibrium utilities and ``Hg``/``Hh`` are the logit Hessians of the
conjugate surplus functions.  The utility responses follow as

    dU = Hg (dmu - mu dn / n),    dV = Hh (dmu - mu dm / m).

Under TU the partials are both one half and the formula collapses to the
classical ``(Hg + Hh)^(-1)`` form.  Average per-capita welfare responds
through the logit envelope, ``du_x = sum_y (mu_xy / n_x) dU_xy``; the
welfare-derivative matrix is symmetric within each side of the market
but generally not across sides (it is across sides under TU).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import bargaining as bg
from .equilibrium import EquilibriumOutcome, Market, Matching
from .errors import DomainError, NumericalError

__all__ = ["CompstatsResult", "SymmetryDiagnostic", "hessians_logit", "delta_matching", "symmetry_diagnostic"]

_SMOOTH = (bg.TU, bg.LTU, bg.ETU)


@dataclass(frozen=True)
class CompstatsResult:
    """Responses of the matching and systematic utilities to ``(dn, dm)``."""

    delta_mu: np.ndarray
    delta_U: np.ndarray
    delta_V: np.ndarray
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SymmetryDiagnostic:
    """Welfare-derivative blocks; entries are per-capita utility responses.

    ``du_dn[x, x']`` is the response of men type ``x``'s average welfare
    to a unit increase of ``n_{x'}``; the other blocks follow the same
    convention.  ``cross_gap`` is the sup difference between
    ``du_dm[x, y]`` and ``dv_dn[y, x]``.
    """

    du_dn: np.ndarray
    du_dm: np.ndarray
    dv_dn: np.ndarray
    dv_dm: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def cross_gap(self) -> float:
        return float(np.max(np.abs(self.du_dm - self.dv_dn.T)))


def hessians_logit(market: Market, matching: Matching) -> tuple[np.ndarray, np.ndarray]:
    """Hessians of the conjugate surplus functions at an interior matching.

    Cells are indexed row-major by ``(x, y)``.  The men-side Hessian has
    entries ``1/mu_xy + 1/mu_x0`` on the diagonal, ``1/mu_x0`` between
    cells sharing ``x`` and zero otherwise; the women side mirrors this
    per ``y``.  Any zero mass makes the Hessians undefined.
    """
    X, Y = market.shape
    mu, mu_x0, mu_0y = matching.mu_xy, matching.mu_x0, matching.mu_0y
    if np.any(mu <= 0) or np.any(mu_x0 <= 0) or np.any(mu_0y <= 0):
        raise DomainError("hessians are defined only at interior matchings (all masses positive)")
    P = X * Y
    hg = np.zeros((P, P))
    for x in range(X):
        sl = slice(x * Y, (x + 1) * Y)
        hg[sl, sl] = 1.0 / mu_x0[x]
    hg[np.arange(P), np.arange(P)] += 1.0 / mu.ravel()
    hh = np.zeros((P, P))
    cols = np.arange(P).reshape(X, Y)
    for y in range(Y):
        idx = cols[:, y]
        hh[np.ix_(idx, idx)] = 1.0 / mu_0y[y]
    hh[np.arange(P), np.arange(P)] += 1.0 / mu.ravel()
    return hg, hh


def _distance_partials(market: Market, outcome: EquilibriumOutcome):
    X, Y = market.shape
    du = np.empty((X, Y))
    dv = np.empty((X, Y))
    kinked = False
    for x in range(X):
        for y in range(Y):
            spec = market.spec(x, y)
            kinked = kinked or not isinstance(spec, _SMOOTH)
            du[x, y], dv[x, y] = bg.partials(spec, outcome.U[x, y], outcome.V[x, y])
    return du.ravel(), dv.ravel(), kinked


def _system(market: Market, outcome: EquilibriumOutcome):
    hg, hh = hessians_logit(market, outcome.matching)
    du, dv, kinked = _distance_partials(market, outcome)
    lhs = du[:, None] * hg + dv[:, None] * hh
    return hg, hh, du, dv, lhs, kinked


def _solve(lhs, rhs):
    cond = float(np.linalg.cond(lhs))
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"comparative-statics system is ill-conditioned (cond ~ {cond:.3e})")
    return np.linalg.solve(lhs, rhs), cond


def delta_matching(market: Market, outcome: EquilibriumOutcome, delta_n, delta_m) -> CompstatsResult:
    """First-order matching and utility responses to ``(delta_n, delta_m)``.

    Requires an interior outcome; with kinked technologies the
    active-branch partials are used and the result is flagged
    best-effort in the diagnostics.
    """
    X, Y = market.shape
    delta_n = np.asarray(delta_n, dtype=float).reshape(-1)
    delta_m = np.asarray(delta_m, dtype=float).reshape(-1)
    if delta_n.shape != (X,) or delta_m.shape != (Y,):
        raise DomainError(f"perturbations must have shapes ({X},) and ({Y},)")
    hg, hh, du, dv, lhs, kinked = _system(market, outcome)
    mu = outcome.matching.mu_xy
    r_n = (mu * (delta_n / market.n)[:, None]).ravel()
    r_m = (mu * (delta_m / market.m)[None, :]).ravel()
    rhs = du * (hg @ r_n) + dv * (hh @ r_m)
    dmu, cond = _solve(lhs, rhs)
    d_U = hg @ (dmu - r_n)
    d_V = hh @ (dmu - r_m)
    return CompstatsResult(
        delta_mu=dmu.reshape(X, Y),
        delta_U=d_U.reshape(X, Y),
        delta_V=d_V.reshape(X, Y),
        diagnostics={"condition_number": cond, "kinked_best_effort": kinked},
    )


def symmetry_diagnostic(market: Market, outcome: EquilibriumOutcome) -> SymmetryDiagnostic:
    """Full welfare-derivative matrix via unit population perturbations.

    All ``|X| + |Y|`` perturbation columns share one factorization of the
    comparative-statics system.  The within-side blocks are symmetric for
    every technology; the cross blocks agree only under TU.
    """
    X, Y = market.shape
    hg, hh, du, dv, lhs, kinked = _system(market, outcome)
    mu = outcome.matching.mu_xy
    n, m = market.n, market.m

    rhs_cols = np.empty((X * Y, X + Y))
    r_cols = np.empty((X * Y, X + Y))
    for xp in range(X):
        r = np.zeros((X, Y))
        r[xp] = mu[xp] / n[xp]
        r_cols[:, xp] = r.ravel()
        rhs_cols[:, xp] = du * (hg @ r.ravel())
    for yp in range(Y):
        r = np.zeros((X, Y))
        r[:, yp] = mu[:, yp] / m[yp]
        r_cols[:, X + yp] = r.ravel()
        rhs_cols[:, X + yp] = dv * (hh @ r.ravel())

    dmu_cols, cond = _solve(lhs, rhs_cols)

    w_men = mu / n[:, None]  # logit envelope weights d u_x / d U_xy
    w_women = mu / m[None, :]
    du_block = np.empty((X, X + Y))
    dv_block = np.empty((Y, X + Y))
    for c in range(X + Y):
        r_n = r_cols[:, c] if c < X else np.zeros(X * Y)
        r_m = r_cols[:, c] if c >= X else np.zeros(X * Y)
        dU = (hg @ (dmu_cols[:, c] - r_n)).reshape(X, Y)
        dV = (hh @ (dmu_cols[:, c] - r_m)).reshape(X, Y)
        du_block[:, c] = (w_men * dU).sum(axis=1)
        dv_block[:, c] = (w_women * dV).sum(axis=0)

    return SymmetryDiagnostic(
        du_dn=du_block[:, :X],
        du_dm=du_block[:, X:],
        dv_dn=dv_block[:, :X],
        dv_dm=dv_block[:, X:],
        diagnostics={"condition_number": cond, "kinked_best_effort": kinked},
    )
