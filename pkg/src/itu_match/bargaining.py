"""Bargaining technologies and their distance-to-frontier representation.

A matched pair bargains over a *feasible set* of utility pairs ``(u, v)``
that is closed, nonempty, lower-comprehensive and bounded above.  Every
such set is represented here by its signed distance-to-frontier function

    D(u, v) = min { z : (u - z, v - z) is feasible },

so ``D(u, v) <= 0`` exactly when ``(u, v)`` is feasible and ``D = 0`` on
the Pareto frontier.  ``D`` is isotone in both arguments and satisfies the
translation identity ``D(a + u, a + v) = a + D(u, v)``.

Supported technologies
----------------------

===============  ====================================================
``TU``           perfectly transferable utility,
                 ``D = (u + v - phi) / 2``
``NTU``          no transfers, ``D = max(u - alpha, v - gamma)``
``LTU``          linear transfers at a non-unit rate,
                 ``D = (lam*u + zeta*v - phi) / (lam + zeta)``
``ETU``          exponential frontier interpolating NTU and TU,
                 ``D = tau * log(((e^((u-alpha)/tau) + e^((v-gamma)/tau)) / B))``
``TaxSchedule``  piecewise-linear convex frontier induced by a convex
                 marginal tax schedule; equals an ``Intersection`` of
                 ``LTU`` pieces
``PublicGoods``  discrete public-good choice on top of ETU sharing;
                 equals a ``Union`` of ``ETU`` pieces
``Union``        feasible iff feasible for *some* child: ``D = min_k D_k``
``Intersection`` feasible iff feasible for *every* child: ``D = max_k D_k``
===============  ====================================================

The ``Union``/``Intersection`` identities are exact, which is what makes
the combinators practical: complex technologies are assembled from the
elementary ones without any geometry code.

Values are immutable after construction and all operations are pure, so
specs can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union as _UnionT

import numpy as np

from .errors import DomainError, ValidationError

__all__ = [
    "DistanceSpec",
    "TU",
    "NTU",
    "LTU",
    "ETU",
    "TaxSchedule",
    "PublicGoodsOption",
    "PublicGoods",
    "Union",
    "Intersection",
    "WedgeBounds",
    "evaluate",
    "partials",
    "wedge_utilities",
    "wedge_bounds",
    "spec_to_dict",
    "spec_from_dict",
]


@dataclass(frozen=True)
class DistanceSpec:
    """Base class for bargaining technologies; instances are immutable."""

    def children(self) -> tuple["DistanceSpec", ...]:
        return ()


def _check_positive(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(f"{name} must be finite and strictly positive, got {value!r}", field=name)
    return value


def _check_finite(value: float, name: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}", field=name)
    return value


@dataclass(frozen=True)
class TU(DistanceSpec):
    """Transferable utility with joint surplus ``phi``."""

    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", _check_finite(self.phi, "phi"))


@dataclass(frozen=True)
class NTU(DistanceSpec):
    """Non-transferable utility with caps ``alpha`` (u side) and ``gamma`` (v side)."""

    alpha: float
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_finite(self.alpha, "alpha"))
        object.__setattr__(self, "gamma", _check_finite(self.gamma, "gamma"))


@dataclass(frozen=True)
class LTU(DistanceSpec):
    """Linear frontier ``lam*u + zeta*v = phi`` with ``lam, zeta > 0``."""

    lam: float
    zeta: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "lam", _check_positive(self.lam, "lam"))
        object.__setattr__(self, "zeta", _check_positive(self.zeta, "zeta"))
        object.__setattr__(self, "phi", _check_finite(self.phi, "phi"))


@dataclass(frozen=True)
class ETU(DistanceSpec):
    """Exponential frontier with transferability degree ``tau`` and budget ``budget``.

    With ``budget = 2`` the technology interpolates between NTU
    (``tau -> 0``) and TU with surplus ``alpha + gamma`` (``tau -> inf``).
    """

    alpha: float
    gamma: float
    tau: float
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_finite(self.alpha, "alpha"))
        object.__setattr__(self, "gamma", _check_finite(self.gamma, "gamma"))
        object.__setattr__(self, "tau", _check_positive(self.tau, "tau"))
        object.__setattr__(self, "budget", _check_positive(self.budget, "budget"))


@dataclass(frozen=True)
class TaxSchedule(DistanceSpec):
    """Convex piecewise-linear tax schedule on the transfer.

    ``thresholds`` are the K bracket edges ``t^1 < ... < t^K`` (the first
    bracket starts at 0) and ``rates`` the K+1 marginal rates
    ``r^0 < r^1 < ... < r^K`` in ``[0, 1)`` applying below, between and
    above the thresholds.  The feasible set is the intersection of the
    K+1 linear technologies obtained by extending each bracket's net-pay
    line, with intercepts following the recursion
    ``alpha^{k+1} = alpha^k + (1 - r^k) (t^{k+1} - t^k)`` from
    ``alpha^0 = alpha`` and ``t^0 = 0``.
    """

    alpha: float
    gamma: float
    thresholds: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_finite(self.alpha, "alpha"))
        object.__setattr__(self, "gamma", _check_finite(self.gamma, "gamma"))
        thr = tuple(float(t) for t in self.thresholds)
        rts = tuple(float(r) for r in self.rates)
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "rates", rts)
        if len(thr) < 1:
            raise ValidationError("thresholds must contain at least one bracket edge", field="thresholds")
        if len(rts) != len(thr) + 1:
            raise ValidationError(
                f"need one more rate than thresholds, got {len(rts)} rates for {len(thr)} thresholds",
                field="rates",
            )
        if any(not math.isfinite(t) for t in thr) or any(t2 <= t1 for t1, t2 in zip(thr, thr[1:])):
            raise ValidationError("thresholds must be finite and strictly increasing", field="thresholds")
        if any(not (0.0 <= r < 1.0) for r in rts):
            raise ValidationError("rates must lie in [0, 1)", field="rates")
        if any(r2 <= r1 for r1, r2 in zip(rts, rts[1:])):
            raise ValidationError("rates must be strictly increasing (convex schedule)", field="rates")

    def bracket_intercepts(self) -> tuple[float, ...]:
        """Intercepts ``alpha^0 .. alpha^K`` of the extended bracket lines."""
        alphas = [self.alpha]
        prev_t = 0.0
        for k, t in enumerate(self.thresholds):
            alphas.append(alphas[-1] + (1.0 - self.rates[k]) * (t - prev_t))
            prev_t = t
        return tuple(alphas)

    def as_intersection(self) -> "Intersection":
        """The exactly equivalent ``Intersection`` of LTU pieces."""
        pieces = []
        for a_k, r_k in zip(self.bracket_intercepts(), self.rates):
            keep = 1.0 - r_k
            pieces.append(LTU(lam=1.0, zeta=keep, phi=a_k + keep * self.gamma))
        return Intersection(children=tuple(pieces))


@dataclass(frozen=True)
class PublicGoodsOption:
    """One public-good choice: affinities and the income left for sharing."""

    alpha: float
    gamma: float
    budget: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_finite(self.alpha, "alpha"))
        object.__setattr__(self, "gamma", _check_finite(self.gamma, "gamma"))
        object.__setattr__(self, "budget", _check_positive(self.budget, "budget"))


@dataclass(frozen=True)
class PublicGoods(DistanceSpec):
    """Discrete public-good menu over ETU sharing; a ``Union`` of ETU sets."""

    options: tuple[PublicGoodsOption, ...]
    tau: float

    def __post_init__(self):
        opts = tuple(
            o if isinstance(o, PublicGoodsOption) else PublicGoodsOption(**o) for o in self.options
        )
        object.__setattr__(self, "options", opts)
        object.__setattr__(self, "tau", _check_positive(self.tau, "tau"))
        if len(opts) == 0:
            raise ValidationError("options must be a nonempty list", field="options")

    def as_union(self) -> "Union":
        return Union(
            children=tuple(
                ETU(alpha=o.alpha, gamma=o.gamma, tau=self.tau, budget=o.budget) for o in self.options
            )
        )


def _check_children(children) -> tuple[DistanceSpec, ...]:
    children = tuple(children)
    if len(children) == 0:
        raise ValidationError("children must be a nonempty list", field="children")
    for c in children:
        if not isinstance(c, DistanceSpec):
            raise ValidationError(f"child {c!r} is not a DistanceSpec", field="children")
    return children


@dataclass(frozen=True)
class Union(DistanceSpec):
    """Feasible iff feasible for at least one child; ``D = min_k D_k``."""

    children_: tuple[DistanceSpec, ...] = field(metadata={"json": "children"})

    def __init__(self, children):
        object.__setattr__(self, "children_", _check_children(children))

    def children(self) -> tuple[DistanceSpec, ...]:
        return self.children_


@dataclass(frozen=True)
class Intersection(DistanceSpec):
    """Feasible iff feasible for every child; ``D = max_k D_k``."""

    children_: tuple[DistanceSpec, ...] = field(metadata={"json": "children"})

    def __init__(self, children):
        object.__setattr__(self, "children_", _check_children(children))

    def children(self) -> tuple[DistanceSpec, ...]:
        return self.children_


# ---------------------------------------------------------------------------
# Evaluation


def _as_float_arrays(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise DomainError("utility arguments must be finite")
    return u, v


def evaluate(spec: DistanceSpec, u, v):
    """Signed distance of ``(u, v)`` to the frontier; ``<= 0`` iff feasible.

    Accepts scalars or broadcastable arrays.  The ETU branch is evaluated
    in log-sum-exp form, so extreme ``|u - alpha| / tau`` does not overflow.
    """
    from . import _backend
    from ._compile import compile_program

    u, v = _as_float_arrays(u, v)
    prog = compile_program(spec)
    scalar = u.ndim == 0 and v.ndim == 0
    u, v = np.broadcast_arrays(u, v)
    out = _backend.eval_points(prog, np.ascontiguousarray(u.ravel()), np.ascontiguousarray(v.ravel()))
    out = out.reshape(u.shape)
    return float(out) if scalar else out


def partials(spec: DistanceSpec, u, v):
    """Partial derivatives ``(dD/du, dD/dv)`` of the distance function.

    At kinks of the min/max technologies the partials of the active
    branch are returned, ties resolved in favour of the branch declared
    first.  Both partials are nonnegative and sum to one wherever the
    translation identity is differentiable.
    """
    from . import _backend
    from ._compile import compile_program

    u, v = _as_float_arrays(u, v)
    prog = compile_program(spec)
    scalar = u.ndim == 0 and v.ndim == 0
    u, v = np.broadcast_arrays(u, v)
    _, du, dv = _backend.eval_points(
        prog, np.ascontiguousarray(u.ravel()), np.ascontiguousarray(v.ravel()), grad=True
    )
    du = du.reshape(u.shape)
    dv = dv.reshape(u.shape)
    if scalar:
        return float(du), float(dv)
    return du, dv


# ---------------------------------------------------------------------------
# Wedge parameterization of the frontier


@dataclass(frozen=True)
class WedgeBounds:
    """Open interval of wedges on which the frontier parameterization moves.

    ``lower`` may be ``-inf`` and ``upper`` ``+inf``.  A finite bound means
    the frontier has an exactly flat segment beyond it (as in NTU), found
    by scanning a geometric grid; asymptotically flat but strictly
    monotone frontiers (ETU) keep infinite bounds.
    """

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValidationError("wedge bounds must satisfy lower < upper", field="wedge_bounds")

    def contains(self, w) -> bool:
        w = np.asarray(w)
        return bool(np.all((w > self.lower) & (w < self.upper)))


def _frontier_u(spec, w):
    # u coordinate of the frontier point with wedge w
    return -evaluate(spec, np.zeros_like(np.asarray(w, dtype=float)), -np.asarray(w, dtype=float))


def _frontier_v(spec, w):
    w = np.asarray(w, dtype=float)
    return -evaluate(spec, w, np.zeros_like(w))


def _limit_upper(spec) -> tuple[float, bool]:
    """(sup of U(w) as w -> +inf, whether the sup is attained at finite w)."""
    if isinstance(spec, (TU, LTU)):
        return math.inf, False
    if isinstance(spec, ETU):
        return spec.alpha + spec.tau * math.log(spec.budget), False
    if isinstance(spec, NTU):
        return spec.alpha, True
    if isinstance(spec, TaxSchedule):
        return _limit_upper(spec.as_intersection())
    if isinstance(spec, PublicGoods):
        return _limit_upper(spec.as_union())
    if isinstance(spec, Union):
        sups = [_limit_upper(c) for c in spec.children()]
        top = max(s for s, _ in sups)
        return top, any(att for s, att in sups if s == top)
    if isinstance(spec, Intersection):
        sups = [_limit_upper(c) for c in spec.children()]
        bottom = min(s for s, _ in sups)
        return bottom, all(att for s, att in sups if s == bottom)
    raise ValidationError(f"unsupported spec {type(spec).__name__}")


def _limit_lower(spec) -> tuple[float, bool]:
    """(sup of V(w) as w -> -inf, whether attained at finite w)."""
    if isinstance(spec, (TU, LTU)):
        return math.inf, False
    if isinstance(spec, ETU):
        return spec.gamma + spec.tau * math.log(spec.budget), False
    if isinstance(spec, NTU):
        return spec.gamma, True
    if isinstance(spec, TaxSchedule):
        return _limit_lower(spec.as_intersection())
    if isinstance(spec, PublicGoods):
        return _limit_lower(spec.as_union())
    if isinstance(spec, Union):
        sups = [_limit_lower(c) for c in spec.children()]
        top = max(s for s, _ in sups)
        return top, any(att for s, att in sups if s == top)
    if isinstance(spec, Intersection):
        sups = [_limit_lower(c) for c in spec.children()]
        bottom = min(s for s, _ in sups)
        return bottom, all(att for s, att in sups if s == bottom)
    raise ValidationError(f"unsupported spec {type(spec).__name__}")


_GRID_BUDGET = 60
_FLAT_TOL = 1e-12


def wedge_bounds(spec: DistanceSpec) -> WedgeBounds:
    """Maximal open wedge interval on which the frontier point keeps moving.

    Technologies whose frontier is strictly downward sloping everywhere
    (TU, LTU, ETU and combinations thereof) get ``(-inf, +inf)``.  When a
    frontier becomes exactly flat (NTU-like), the bound is located on the
    geometric grid ``w = +-2^k, k = 0..60``: the first grid point past
    which the frontier coordinate stops changing is reported.
    """
    _, upper_attained = _limit_upper(spec)
    _, lower_attained = _limit_lower(spec)

    upper = math.inf
    if upper_attained:
        grid = 2.0 ** np.arange(_GRID_BUDGET + 1)
        uu = _frontier_u(spec, grid)
        flat = np.abs(np.diff(uu)) < _FLAT_TOL
        hits = np.nonzero(flat)[0]
        if hits.size:
            upper = float(grid[hits[0] + 1])

    lower = -math.inf
    if lower_attained:
        grid = -(2.0 ** np.arange(_GRID_BUDGET + 1))
        vv = _frontier_v(spec, grid)
        flat = np.abs(np.diff(vv)) < _FLAT_TOL
        hits = np.nonzero(flat)[0]
        if hits.size:
            lower = float(grid[hits[0] + 1])

    return WedgeBounds(lower=lower, upper=upper)


def wedge_utilities(spec: DistanceSpec, w):
    """Frontier utilities ``(U, V)`` with wedge ``U - V = w``.

    ``U(w) = -D(0, -w)`` and ``V = U - w``, so the wedge identity is exact
    and ``D(U, V) = 0`` up to roundoff.  ``U`` is nondecreasing, ``V``
    nonincreasing, both 1-Lipschitz.  ``w`` must lie strictly inside
    ``wedge_bounds(spec)``.
    """
    bounds = wedge_bounds(spec)
    w_arr = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w_arr)):
        raise DomainError("wedge must be finite")
    if not bounds.contains(w_arr):
        raise DomainError(f"wedge {w!r} outside admissible open interval ({bounds.lower}, {bounds.upper})")
    U = -evaluate(spec, np.zeros_like(w_arr), -w_arr)
    V = U - w_arr
    if np.ndim(w) == 0:
        return float(U), float(V)
    return U, V


# ---------------------------------------------------------------------------
# JSON serialization


def spec_to_dict(spec: DistanceSpec) -> dict:
    """Tagged-dict form of a spec, suitable for ``json.dumps``."""
    if isinstance(spec, TU):
        return {"type": "TU", "phi": spec.phi}
    if isinstance(spec, NTU):
        return {"type": "NTU", "alpha": spec.alpha, "gamma": spec.gamma}
    if isinstance(spec, LTU):
        return {"type": "LTU", "lambda": spec.lam, "zeta": spec.zeta, "phi": spec.phi}
    if isinstance(spec, ETU):
        return {"type": "ETU", "alpha": spec.alpha, "gamma": spec.gamma, "tau": spec.tau, "budget": spec.budget}
    if isinstance(spec, TaxSchedule):
        return {
            "type": "TaxSchedule",
            "alpha": spec.alpha,
            "gamma": spec.gamma,
            "thresholds": list(spec.thresholds),
            "rates": list(spec.rates),
        }
    if isinstance(spec, PublicGoods):
        return {
            "type": "PublicGoods",
            "tau": spec.tau,
            "options": [{"alpha": o.alpha, "gamma": o.gamma, "budget": o.budget} for o in spec.options],
        }
    if isinstance(spec, Union):
        return {"type": "Union", "children": [spec_to_dict(c) for c in spec.children()]}
    if isinstance(spec, Intersection):
        return {"type": "Intersection", "children": [spec_to_dict(c) for c in spec.children()]}
    raise ValidationError(f"unsupported spec {type(spec).__name__}")


def spec_from_dict(data: dict) -> DistanceSpec:
    """Inverse of :func:`spec_to_dict`; validates while constructing."""
    if not isinstance(data, dict) or "type" not in data:
        raise ValidationError("distance spec must be an object with a 'type' tag", field="type")
    tag = data["type"]
    try:
        if tag == "TU":
            return TU(phi=data["phi"])
        if tag == "NTU":
            return NTU(alpha=data["alpha"], gamma=data["gamma"])
        if tag == "LTU":
            return LTU(lam=data["lambda"], zeta=data["zeta"], phi=data["phi"])
        if tag == "ETU":
            return ETU(alpha=data["alpha"], gamma=data["gamma"], tau=data["tau"], budget=data["budget"])
        if tag == "TaxSchedule":
            return TaxSchedule(
                alpha=data["alpha"],
                gamma=data["gamma"],
                thresholds=tuple(data["thresholds"]),
                rates=tuple(data["rates"]),
            )
        if tag == "PublicGoods":
            return PublicGoods(
                options=tuple(PublicGoodsOption(**o) for o in data["options"]),
                tau=data["tau"],
            )
        if tag == "Union":
            return Union(children=tuple(spec_from_dict(c) for c in data["children"]))
        if tag == "Intersection":
            return Intersection(children=tuple(spec_from_dict(c) for c in data["children"]))
    except KeyError as exc:
        raise ValidationError(f"missing field {exc.args[0]!r} in {tag} spec", field=exc.args[0]) from exc
    raise ValidationError(f"unknown distance spec type {tag!r}", field="type")


SpecLike = _UnionT[DistanceSpec, dict]
