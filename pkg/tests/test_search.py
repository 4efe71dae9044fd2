"""Search-and-matching steady states."""

import numpy as np
import pytest

from itu_match import bargaining as bg
from itu_match.equilibrium import Market
from itu_match.errors import ValidationError
from itu_match.search import SearchParams, match_surplus, solve_steady_state


def residuals_of(market, params, out):
    X, Y = market.shape
    d = np.empty((X, Y))
    for i in range(X):
        for j in range(Y):
            d[i, j] = bg.evaluate(market.spec(i, j), out.u[i], out.v[j])
    accept = d <= 0.0
    gain = np.maximum(0.0, -d)
    s_x, s_y = out.matching.mu_x0, out.matching.mu_0y
    r_u = out.u - params.rho * (s_y[None, :] * gain).sum(axis=1)
    r_v = out.v - params.rho * (s_x[:, None] * gain).sum(axis=0)
    mu = params.rho / params.delta_destroy * np.outer(s_x, s_y) * accept
    r_flow = np.abs(out.matching.mu_xy - mu)
    r_n = s_x + out.matching.mu_xy.sum(axis=1) - market.n
    r_m = s_y + out.matching.mu_xy.sum(axis=0) - market.m
    return max(
        np.abs(r_u).max(), np.abs(r_v).max(), r_flow.max(), np.abs(r_n).max(), np.abs(r_m).max()
    )


def test_zero_surplus_everyone_waits():
    market = Market(("x",), ("y",), [1.0], [1.0], bg.TU(-50.0))
    out = solve_steady_state(market, SearchParams(1.0, 1.0, 0.05))
    assert out.u[0] == 0.0 and out.v[0] == 0.0
    assert out.matching.mu_x0[0] == pytest.approx(1.0)
    assert out.matching.mu_xy[0, 0] == 0.0
    assert not out.accept[0, 0]


def test_symmetric_1x1_against_scalar_oracle():
    # symmetric primitives: u = v and equal singles s solving
    # s + s^2 = 1 (flow balance) and u = s * (2 - 2u)/2 = s(1 - u)
    market = Market(("x",), ("y",), [1.0], [1.0], bg.TU(2.0))
    params = SearchParams(rho=1.0, delta_destroy=1.0, r=1.0)
    out = solve_steady_state(market, params, tol=1e-12)

    lo, hi = 0.0, 1.0
    for _ in range(200):  # bisection oracle on s + s^2 = 1
        mid = 0.5 * (lo + hi)
        if mid + mid * mid > 1.0:
            hi = mid
        else:
            lo = mid
    s = 0.5 * (lo + hi)
    u = s / (1.0 + s)
    assert out.matching.mu_x0[0] == pytest.approx(s, abs=1e-9)
    assert out.matching.mu_0y[0] == pytest.approx(s, abs=1e-9)
    assert out.u[0] == pytest.approx(u, abs=1e-9)
    assert out.v[0] == pytest.approx(u, abs=1e-9)
    assert residuals_of(market, params, out) <= 1e-8


def test_acceptance_set_matches_sign_of_distance():
    tech = {
        ("x1", "y1"): bg.TU(1.0),
        ("x1", "y2"): bg.TU(-3.0),
        ("x2", "y1"): bg.ETU(0.5, 0.5, 1.0, 2.0),
        ("x2", "y2"): bg.TU(-0.1),
    }
    market = Market(("x1", "x2"), ("y1", "y2"), [1.0, 0.7], [0.8, 1.2], tech)
    params = SearchParams(rho=0.8, delta_destroy=0.6, r=0.04)
    out = solve_steady_state(market, params, tol=1e-10)
    for i in range(2):
        for j in range(2):
            d = bg.evaluate(market.spec(i, j), out.u[i], out.v[j])
            assert bool(out.accept[i, j]) == bool(d <= 0.0)
            assert (out.matching.mu_xy[i, j] > 0.0) == bool(d <= 0.0)
    assert residuals_of(market, params, out) <= 1e-8


def test_meeting_rate_increase_depletes_singles():
    market = Market(("x",), ("y",), [1.0], [1.0], bg.TU(1.0))
    singles = []
    for rho in (1.0, 10.0, 100.0):
        out = solve_steady_state(market, SearchParams(rho, 1.0, 0.05), tol=1e-10)
        singles.append(out.matching.mu_x0[0])
    assert singles[0] > singles[1] > singles[2]


def test_match_surplus_examples():
    params = SearchParams(rho=1.0, delta_destroy=1.0, r=1.0)
    assert match_surplus(bg.TU(2.0), 1.0, 1.0, params) == 0.0
    assert match_surplus(bg.TU(2.0), 0.0, 0.0, params) == pytest.approx(0.5)
    doubled = SearchParams(rho=1.0, delta_destroy=2.0, r=2.0)
    assert match_surplus(bg.TU(2.0), 0.0, 0.0, doubled) == pytest.approx(0.25)


def test_damped_residual_monotone_after_burn_in():
    market = Market(("x1", "x2"), ("y1",), [1.0, 0.6], [1.1], bg.TU(0.8))
    params = SearchParams(rho=1.2, delta_destroy=0.9, r=0.05)
    out = solve_steady_state(market, params, tol=1e-10)
    hist = out.diagnostics["residual_history"]
    tail = hist[10:]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(tail, tail[1:]))


def test_initialization_override_recorded():
    market = Market(("x",), ("y",), [1.0], [1.0], bg.TU(1.0))
    params = SearchParams(1.0, 1.0, 0.05)
    base = solve_steady_state(market, params)
    out = solve_steady_state(
        market,
        params,
        init=(base.u, base.v, base.matching.mu_x0, base.matching.mu_0y),
    )
    assert out.diagnostics["initialization"] == "user-supplied"
    assert out.diagnostics["iterations"] <= base.diagnostics["iterations"]


def test_params_validation():
    with pytest.raises(ValidationError):
        SearchParams(rho=0.0, delta_destroy=1.0, r=0.1)
    with pytest.raises(ValidationError):
        SearchParams(rho=1.0, delta_destroy=-1.0, r=0.1)
