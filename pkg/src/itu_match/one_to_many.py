"""One-to-many matching: firms hire bundles of workers.

A bundle is a count vector ``b`` over worker types; with transferable
output ``phi_by`` shared between the firm and the ``s_b`` bundle members,
the distance-to-frontier generalizes to

    D_by(u, v_y) = (sum_x b_x u_x + v_y - phi_by) / (s_b + 1),

which is nondecreasing in ``v_y`` and in every ``u_x`` with ``b_x > 0``,
ignores workers outside the bundle, and shifts by ``t`` when all
utilities shift by ``t``.  Market clearing with logit-style bundle
demand and worker reservation utility normalized to zero reads

    sum_y sum_b b_x exp(-D_by(u, v)) + exp(-u_x) = n_x      (workers)
    sum_b exp(-D_by(u, v)) = m_y                            (firms)

with the empty bundle included on the firm side (void firms).  The sums
run over a truncated bundle set (``max_bundle_size``); the truncation is
always reported.  Existence and uniqueness are open for this system, so
the solver is explicitly experimental: it returns a structured result
with a residual history instead of raising on non-convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from ._scalar import solve_monotone
from .errors import ValidationError

__all__ = [
    "BundleTable",
    "OneToManyResult",
    "enumerate_bundles",
    "distance_otm",
    "clearing_residual",
    "solve_experimental",
]

_MAX_WORKER_TYPES = 4
_MAX_ENUMERATION = 5000


def enumerate_bundles(n_types: int, max_size: int) -> list[tuple[int, ...]]:
    """All worker-count vectors with total size up to ``max_size``.

    Deterministic order: by total size, then lexicographic.  The empty
    bundle comes first.
    """
    if n_types < 1:
        raise ValidationError("need at least one worker type", field="n_types")
    if n_types > _MAX_WORKER_TYPES:
        raise ValidationError(
            f"bundle enumeration supports at most {_MAX_WORKER_TYPES} worker types, got {n_types}",
            field="n_types",
        )
    if max_size < 0:
        raise ValidationError("max_size must be nonnegative", field="max_size")
    bundles = [b for b in product(range(max_size + 1), repeat=n_types) if sum(b) <= max_size]
    bundles.sort(key=lambda b: (sum(b), b))
    if len(bundles) > _MAX_ENUMERATION:
        raise ValidationError(f"bundle enumeration too large ({len(bundles)} bundles)", field="max_size")
    return bundles


@dataclass(frozen=True)
class BundleTable:
    """Output table ``phi_by`` for every (bundle, firm type) pair.

    ``values`` maps bundle count-vectors to per-firm-type dicts.  Missing
    entries are validation errors; use a large negative value to shut a
    bundle down.
    """

    x_labels: tuple[str, ...]
    y_labels: tuple[str, ...]
    values: dict

    def __post_init__(self):
        object.__setattr__(self, "x_labels", tuple(map(str, self.x_labels)))
        object.__setattr__(self, "y_labels", tuple(map(str, self.y_labels)))
        vals = {}
        for b, row in dict(self.values).items():
            b = tuple(int(c) for c in b)
            if len(b) != len(self.x_labels) or any(c < 0 for c in b):
                raise ValidationError(f"bad bundle key {b!r}", field="phi")
            vals[b] = {str(y): float(val) for y, val in dict(row).items()}
        object.__setattr__(self, "values", vals)

    def phi(self, bundle: tuple[int, ...], y: str) -> float:
        bundle = tuple(int(c) for c in bundle)
        try:
            return self.values[bundle][str(y)]
        except KeyError:
            raise ValidationError(
                f"missing output entry for bundle {list(bundle)} at firm type {y!r}", field="phi"
            ) from None

    def matrix(self, bundles, y_labels=None) -> np.ndarray:
        ys = self.y_labels if y_labels is None else tuple(map(str, y_labels))
        return np.array([[self.phi(b, y) for y in ys] for b in bundles])


def distance_otm(phi_by: BundleTable, bundle, y: str, u, v_y: float, d_fn=None) -> float:
    """Signed distance for one (bundle, firm) pair at worker utilities ``u``.

    ``d_fn(bundle, y, u, v_y)`` overrides the transferable-output form
    for user-supplied technologies.
    """
    bundle = tuple(int(c) for c in bundle)
    u = np.asarray(u, dtype=float).reshape(-1)
    if len(bundle) != u.size:
        raise ValidationError("bundle and u must have one entry per worker type", field="bundle")
    if d_fn is not None:
        return float(d_fn(bundle, y, u, v_y))
    s_b = sum(bundle)
    return float((np.dot(bundle, u) + v_y - phi_by.phi(bundle, y)) / (s_b + 1.0))


def _distance_matrix(phi_mat, bundles_arr, sizes, u, v):
    # [B, Y] distances for all bundles and firm types at once
    return (bundles_arr @ u[:, None] + v[None, :] - phi_mat) / (sizes[:, None] + 1.0)


@dataclass(frozen=True)
class OneToManyResult:
    """Experimental solver output; inspect ``converged`` before using."""

    converged: bool
    u: np.ndarray
    v: np.ndarray
    mu_by: np.ndarray
    mu_x0: np.ndarray
    bundles: tuple[tuple[int, ...], ...]
    residual: float
    residual_history: tuple[float, ...]
    diagnostics: dict = field(default_factory=dict)


def _setup(phi_by: BundleTable, n, m, max_bundle_size: int):
    n = np.asarray(n, dtype=float).reshape(-1)
    m = np.asarray(m, dtype=float).reshape(-1)
    if n.size != len(phi_by.x_labels) or m.size != len(phi_by.y_labels):
        raise ValidationError("population vectors must match the table's type lists", field="n")
    if np.any(n <= 0) or np.any(m <= 0):
        raise ValidationError("populations must be strictly positive", field="n")
    bundles = enumerate_bundles(n.size, max_bundle_size)
    bundles_arr = np.array(bundles, dtype=float)
    sizes = bundles_arr.sum(axis=1)
    phi_mat = phi_by.matrix(bundles)
    return n, m, bundles, bundles_arr, sizes, phi_mat


def clearing_residual(phi_by: BundleTable, n, m, u, v, max_bundle_size: int = 3):
    """Worker-side and firm-side clearing residuals at ``(u, v)``.

    Returns ``(worker_residual, firm_residual, info)`` where ``info``
    records the truncated bundle set used.
    """
    n, m, bundles, bundles_arr, sizes, phi_mat = _setup(phi_by, n, m, max_bundle_size)
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    d = _distance_matrix(phi_mat, bundles_arr, sizes, u, v)
    mu_by = np.exp(-d)
    worker = (bundles_arr[:, :, None] * mu_by[:, None, :]).sum(axis=(0, 2)) + np.exp(-u) - n
    firm = mu_by.sum(axis=0) - m
    info = {"bundles": bundles, "max_bundle_size": max_bundle_size, "truncated": True}
    return worker, firm, info


def solve_experimental(
    phi_by: BundleTable,
    n,
    m,
    max_bundle_size: int = 3,
    tol: float = 1e-10,
    max_iter: int = 5000,
    damping: float = 0.5,
) -> OneToManyResult:
    """Best-effort damped coordinate iteration on the clearing system.

    Each pass solves every worker type's equation in its own ``u_x``
    (strictly decreasing) and every firm type's in ``v_y``, then relaxes.
    No existence or uniqueness claim is made for the truncated system;
    non-convergence is reported in the result, not raised.
    """
    n, m, bundles, bundles_arr, sizes, phi_mat = _setup(phi_by, n, m, max_bundle_size)
    X, Y = n.size, m.size
    u = np.zeros(X)
    v = np.zeros(Y)

    def residual_of(u_vec, v_vec):
        d = _distance_matrix(phi_mat, bundles_arr, sizes, u_vec, v_vec)
        mu_by = np.exp(-d)
        worker = (bundles_arr[:, :, None] * mu_by[:, None, :]).sum(axis=(0, 2)) + np.exp(-u_vec) - n
        firm = mu_by.sum(axis=0) - m
        return float(max(np.abs(worker).max(), np.abs(firm).max())), mu_by

    residual, mu_by = residual_of(u, v)
    history = [residual]
    converged = residual <= tol
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if converged:
            break

        def worker_f(u_vec):
            d = _distance_matrix(phi_mat, bundles_arr, sizes, u_vec, v)
            mu = np.exp(-d)
            val = (bundles_arr[:, :, None] * mu[:, None, :]).sum(axis=(0, 2)) + np.exp(-u_vec) - n
            slope = bundles_arr / (sizes[:, None] + 1.0)
            deriv = -(bundles_arr[:, :, None] * slope[:, :, None] * mu[:, None, :]).sum(axis=(0, 2)) - np.exp(-u_vec)
            return val, deriv

        u_t = solve_monotone(worker_f, u, decreasing=True, ftol=1e-13 * np.maximum(1.0, n))

        def firm_f(v_vec):
            d = _distance_matrix(phi_mat, bundles_arr, sizes, u_t, v_vec)
            mu = np.exp(-d)
            val = mu.sum(axis=0) - m
            deriv = -(mu / (sizes[:, None] + 1.0)).sum(axis=0)
            return val, deriv

        v_t = solve_monotone(firm_f, v, decreasing=True, ftol=1e-13 * np.maximum(1.0, m))

        u = (1.0 - damping) * u + damping * u_t
        v = (1.0 - damping) * v + damping * v_t
        residual, mu_by = residual_of(u, v)
        history.append(residual)
        converged = residual <= tol
        if len(history) > 60 and residual > 0.9 * history[-50]:
            if residual > tol:  # stalled
                break

    return OneToManyResult(
        converged=bool(converged),
        u=u,
        v=v,
        mu_by=mu_by,
        mu_x0=np.exp(-u),
        bundles=tuple(bundles),
        residual=residual,
        residual_history=tuple(history[-200:]),
        diagnostics={
            "iterations": iterations,
            "max_bundle_size": max_bundle_size,
            "truncated": True,
            "n_bundles": len(bundles),
        },
    )
