"""One-to-many extension: bundle distances, clearing, experimental solver."""

import numpy as np
import pytest

from itu_match import bargaining as bg
from itu_match.equilibrium import Market, solve_ipfp
from itu_match.errors import ValidationError
from itu_match.one_to_many import (
    BundleTable,
    clearing_residual,
    distance_otm,
    enumerate_bundles,
    solve_experimental,
)


def two_type_table(max_size=2):
    values = {}
    for b in enumerate_bundles(2, max_size):
        values[b] = {"f1": 1.0 * b[0] + 0.5 * b[1], "f2": 0.8 * sum(b)}
    values[(0, 0)] = {"f1": 0.0, "f2": 0.0}
    return BundleTable(("w1", "w2"), ("f1", "f2"), values)


def test_bundle_enumeration_deterministic():
    bundles = enumerate_bundles(2, 2)
    assert bundles[0] == (0, 0)
    assert bundles == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    with pytest.raises(ValidationError):
        enumerate_bundles(5, 2)


def test_empty_bundle_distance():
    table = BundleTable(("w",), ("f",), {(0,): {"f": 0.0}})
    assert distance_otm(table, (0,), "f", [3.0], 0.0) == 0.0


def test_singleton_bundle_reduces_to_pairwise_form():
    table = BundleTable(("w",), ("f",), {(1,): {"f": 2.0}})
    d = distance_otm(table, (1,), "f", [0.7], -0.3)
    assert d == pytest.approx((0.7 - 0.3 - 2.0) / 2.0)


def test_translation_identity_exact(rng):
    table = two_type_table()
    for _ in range(50):
        b = (int(rng.integers(0, 3)), int(rng.integers(0, 2)))
        if sum(b) > 2:
            continue
        u = rng.normal(size=2)
        v = float(rng.normal())
        t = float(rng.uniform(-5, 5))
        d0 = distance_otm(table, b, "f1", u, v)
        d1 = distance_otm(table, b, "f1", u + t, v + t)
        assert d1 == pytest.approx(d0 + t, abs=1e-12)


def test_missing_entry_raises():
    table = BundleTable(("w",), ("f",), {(0,): {"f": 0.0}})
    with pytest.raises(ValidationError):
        distance_otm(table, (1,), "f", [0.0], 0.0)


def test_zero_surplus_economy_pins_worker_utilities():
    sentinel = -1e6
    table = BundleTable(
        ("w",), ("f",), {(0,): {"f": 0.0}, (1,): {"f": sentinel}}
    )
    n = np.array([2.0])
    # with no hiring, the worker equation is exp(-u) = n
    u = np.array([-np.log(2.0)])
    v = np.array([0.7])
    worker, firm, info = clearing_residual(table, n, [1.0], u, v, max_bundle_size=1)
    assert worker[0] == pytest.approx(0.0, abs=1e-12)
    assert info["truncated"] is True


def test_worker_residual_strictly_decreasing_in_own_utility():
    table = two_type_table()
    v = np.array([0.2, -0.1])
    u = np.array([0.5, 0.1])
    w0, _, _ = clearing_residual(table, [1.0, 1.0], [1.0, 1.0], u, v, 2)
    u2 = u.copy()
    u2[0] += 0.01
    w1, _, _ = clearing_residual(table, [1.0, 1.0], [1.0, 1.0], u2, v, 2)
    assert w1[0] < w0[0]


def test_bundle_size_one_matches_pairwise_solver():
    phi = 1.3
    table = BundleTable(("w",), ("f",), {(0,): {"f": 0.0}, (1,): {"f": phi}})
    res = solve_experimental(table, [1.2], [0.9], max_bundle_size=1, tol=1e-12)
    assert res.converged
    market = Market(("w",), ("f",), [1.2], [0.9], bg.TU(phi))
    out = solve_ipfp(market, tol=1e-13)
    assert res.mu_x0[0] == pytest.approx(out.matching.mu_x0[0], abs=1e-8)
    assert res.mu_by[1, 0] == pytest.approx(out.matching.mu_xy[0, 0], abs=1e-8)
    assert np.exp(-res.v[0]) == pytest.approx(out.matching.mu_0y[0], abs=1e-8)


def test_scaling_probe_in_convergent_case():
    table = two_type_table()
    res1 = solve_experimental(table, [1.0, 1.0], [1.0, 1.0], max_bundle_size=2, tol=1e-11)
    assert res1.converged
    w, f, _ = clearing_residual(table, [1.0, 1.0], [1.0, 1.0], res1.u, res1.v, 2)
    assert max(np.abs(w).max(), np.abs(f).max()) <= 1e-10


def test_failure_is_structured_not_raised():
    # strong complementarities at tiny tolerance and budget: may stall,
    # and must come back as a result object either way
    values = {}
    for b in enumerate_bundles(2, 3):
        values[b] = {"f": 4.0 * sum(b) ** 2}
    table = BundleTable(("w1", "w2"), ("f",), values)
    res = solve_experimental(table, [1.0, 1.0], [1.0], max_bundle_size=3, tol=1e-14, max_iter=5)
    assert hasattr(res, "converged")
    assert len(res.residual_history) >= 1
    assert res.diagnostics["truncated"] is True
