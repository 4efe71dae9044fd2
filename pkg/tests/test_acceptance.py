"""Acceptance suite: one test per release criterion, with its budget.

Each test prints a single ``[PASS]`` line (visible with ``pytest -s`` or
in the captured output) and enforces the criterion's tolerance and time
budget.  Randomized criteria use fixed seeds, so the suite is
deterministic.
"""

import time

import numpy as np
import pytest

import itu_match as im
from itu_match import bargaining as bg
from itu_match.compstats import delta_matching, symmetry_diagnostic
from itu_match.equilibrium import Market, excess_demand, solve_ipfp, solve_jacobi, verify
from itu_match.estimation import ParametricModel, fit_mle, sample_synthetic
from itu_match.full_assignment import solve_full
from itu_match.matchfn import MatchFnSpec, match_mass, match_mass_generic
from itu_match.one_to_many import BundleTable, distance_otm, solve_experimental
from itu_match.search import SearchParams, solve_steady_state

from conftest import random_market, random_spec


def _report(num, text, t0, budget):
    elapsed = time.perf_counter() - t0
    print(f"\n[PASS] criterion {num}: {text} ({elapsed:.2f}s, budget {budget}s)")
    assert elapsed < budget


# -- criterion 1 ------------------------------------------------------------


def test_criterion_01_distance_law_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    cases = 0
    for _ in range(100):
        spec = random_spec(rng)
        u = rng.normal(scale=3.0, size=100)
        v = rng.normal(scale=3.0, size=100)
        d = bg.evaluate(spec, u, v)

        # translation identity within 1e-12
        a = rng.uniform(-10.0, 10.0)
        shifted = bg.evaluate(spec, u + a, v + a)
        assert np.max(np.abs(shifted - (d + a))) <= 1e-12 * np.maximum(1.0, np.abs(d + a)).max()

        # isotonicity
        step_u = rng.uniform(0.0, 2.0, size=100)
        step_v = rng.uniform(0.0, 2.0, size=100)
        assert np.all(bg.evaluate(spec, u + step_u, v + step_v) >= d - 1e-14)

        cases += 100

    for _ in range(34):
        kids = [random_spec(rng, kinds=("TU", "NTU", "LTU", "ETU")) for _ in range(3)]
        u = rng.normal(scale=3.0, size=50)
        v = rng.normal(scale=3.0, size=50)
        stack = np.stack([bg.evaluate(c, u, v) for c in kids])
        np.testing.assert_array_equal(bg.evaluate(bg.Union(kids), u, v), stack.min(axis=0))
        np.testing.assert_array_equal(bg.evaluate(bg.Intersection(kids), u, v), stack.max(axis=0))
        cases += 50

    for _ in range(34):
        spec = MatchFnSpec.generic(random_spec(rng, kinds=("TU", "NTU", "LTU", "ETU")))
        aa = rng.uniform(0.05, 6.0, size=50)
        bb = rng.uniform(0.05, 6.0, size=50)
        fast = match_mass(spec, aa, bb)
        generic = match_mass_generic(spec, aa, bb)
        assert np.max(np.abs(fast - generic) / np.maximum(np.abs(generic), 1e-300)) <= 1e-12
        cases += 50

    assert cases >= 10_000
    _report(1, f"distance-function law suite over {cases} randomized cases", t0, 5.0)


# -- criterion 2 ------------------------------------------------------------


def test_criterion_02_etu_interpolation():
    t0 = time.perf_counter()
    alpha, gamma = 0.3, -0.2
    grid = np.linspace(-1.5, 1.5, 11)
    uu, vv = np.meshgrid(grid, grid)
    ntu_d = bg.evaluate(bg.NTU(alpha, gamma), uu, vv)
    tu_d = bg.evaluate(bg.TU(alpha + gamma), uu, vv)
    assert np.max(np.abs(bg.evaluate(bg.ETU(alpha, gamma, 1e-4, 2.0), uu, vv) - ntu_d)) < 1e-2
    assert np.max(np.abs(bg.evaluate(bg.ETU(alpha, gamma, 1e4, 2.0), uu, vv) - tu_d)) < 1e-2

    masses = np.linspace(0.2, 3.0, 8)
    aa, bb = np.meshgrid(masses, masses)
    ntu_m = match_mass(MatchFnSpec.generic(bg.NTU(alpha, gamma)), aa, bb)
    tu_m = match_mass(MatchFnSpec.generic(bg.TU(alpha + gamma)), aa, bb)
    near_ntu = match_mass(MatchFnSpec.generic(bg.ETU(alpha, gamma, 1e-4, 2.0)), aa, bb)
    near_tu = match_mass(MatchFnSpec.generic(bg.ETU(alpha, gamma, 1e4, 2.0)), aa, bb)
    assert np.max(np.abs(near_ntu - ntu_m)) < 1e-2
    assert np.max(np.abs(near_tu - tu_m)) < 1e-2
    _report(2, "ETU converges to NTU (tau -> 0) and TU (tau -> inf) references", t0, 1.0)


# -- criteria 3 and 4 -------------------------------------------------------


def _cross_agreement_suite():
    rng = np.random.default_rng(303)
    markets = [
        random_market(rng, max_types=10, union_children=("TU", "LTU", "ETU"))
        for _ in range(50)
    ]
    results = []
    for market in markets:
        t_start = time.perf_counter()
        out_i = solve_ipfp(market, tol=1e-11)
        out_j = solve_jacobi(market, tol=1e-11)
        elapsed = time.perf_counter() - t_start
        results.append((market, out_i, out_j, elapsed))
    return results


@pytest.fixture(scope="module")
def cross_suite():
    return _cross_agreement_suite()


def test_criterion_03_solver_cross_agreement(cross_suite):
    t0 = time.perf_counter()
    for market, out_i, out_j, elapsed in cross_suite:
        assert np.abs(out_i.matching.mu_xy - out_j.matching.mu_xy).max() < 1e-6
        assert verify(market, out_i).max_residual() <= 1e-10
        assert verify(market, out_j).max_residual() <= 1e-10
        assert elapsed < 2.0
    print(
        f"\n[PASS] criterion 3: both solvers agree (sup gap < 1e-6) with residuals <= 1e-10 "
        f"on {len(cross_suite)} random markets, slowest {max(e for *_, e in cross_suite):.2f}s"
    )
    assert time.perf_counter() - t0 < 10.0


def test_criterion_04_ipfp_monotone_trajectories(cross_suite):
    violations = sum(
        1 for _, out_i, _, _ in cross_suite if out_i.diagnostics["monotone_violation"] > 0.0
    )
    assert violations == 0
    print(
        f"\n[PASS] criterion 4: singles-mass iterates nonincreasing in all "
        f"{len(cross_suite)} runs (zero violations)"
    )


# -- criterion 5 ------------------------------------------------------------


def test_criterion_05_gross_substitutability_signs():
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    h = 1e-6
    for _ in range(20):
        market = random_market(rng, max_types=4)
        W = solve_ipfp(market).W
        X, Y = market.shape
        for i in range(X):
            for j in range(Y):
                dW = np.zeros((X, Y))
                dW[i, j] = h
                grad = (excess_demand(market, W + dW) - excess_demand(market, W - dW)) / (2 * h)
                assert grad[i, j] < 0.0
                assert np.all(grad[i, :][np.arange(Y) != j] > 0.0)
                assert np.all(grad[:, j][np.arange(X) != i] > 0.0)
                other = np.ones((X, Y), dtype=bool)
                other[i, :] = False
                other[:, j] = False
                assert np.all(np.abs(grad[other]) <= 1e-12)
    _report(5, "excess-demand sign pattern (gross substitutes) on 20 markets", t0, 30.0)


# -- criterion 6 ------------------------------------------------------------


def test_criterion_06_complementarity_as_temperature_vanishes():
    t0 = time.perf_counter()
    Phi = np.array([[0.0, -0.5, -0.6], [-0.4, 0.0, -0.5], [-0.7, -0.3, 0.0]])
    n = np.array([4.0, 3.0, 3.6])
    xs = ("x1", "x2", "x3")
    ys = ("y1", "y2", "y3")
    tech = {(x, y): bg.TU(Phi[i, j]) for i, x in enumerate(xs) for j, y in enumerate(ys)}
    residuals = []
    for sigma in (1.0, 0.1, 0.01):
        market = Market(xs, ys, n, n, tech, sigma=sigma)
        out = solve_ipfp(market, tol=1e-10)
        u = -sigma * np.log(out.matching.mu_x0)
        v = -sigma * np.log(out.matching.mu_0y)
        d = 0.5 * (u[:, None] + v[None, :] - Phi)
        residuals.append(float((out.matching.mu_xy * np.maximum(0.0, -d)).sum()))
    assert residuals[0] > residuals[1] > residuals[2]
    assert residuals[2] < 0.05
    _report(
        6,
        f"complementarity residual decreases {residuals[0]:.3f} -> {residuals[1]:.3f} -> "
        f"{residuals[2]:.3f} as the temperature vanishes",
        t0,
        5.0,
    )


# -- criterion 7 ------------------------------------------------------------


def test_criterion_07_mle_monte_carlo():
    t0 = time.perf_counter()
    lam_true = np.array([1.0, -0.5])
    basis = [np.eye(2).tolist(), [[0.0, 1.0], [1.0, 0.0]]]
    model = ParametricModel.tu(["x1", "x2"], ["y1", "y2"], phi_basis=basis)
    theta_true = model.pack(lam_true, [0.3, -0.2], [0.1, 0.4])
    n_hat = 10**5
    reps = 100
    estimates = np.empty((reps, 2))
    covered = np.zeros(2, dtype=int)
    for rep in range(reps):
        sample = sample_synthetic(model, theta_true, n_hat=n_hat, seed=7000 + rep)
        fit = fit_mle(model, sample)
        assert fit.diagnostics["score_sup_norm"] <= 1e-6
        estimates[rep] = fit.lam_hat
        se = np.sqrt(np.diag(fit.variance)[:2])
        covered += (np.abs(fit.lam_hat - lam_true) <= 1.96 * se).astype(int)
    mc_se = estimates.std(axis=0, ddof=1) / np.sqrt(reps)
    bias = np.abs(estimates.mean(axis=0) - lam_true)
    assert np.all(bias <= 3.0 * mc_se)
    assert np.all(covered >= 88)
    _report(
        7,
        f"MLE recovery over {reps} replications: bias within 3 MC standard errors, "
        f"Wald coverage {covered.tolist()}/100",
        t0,
        300.0,
    )


# -- criterion 8 ------------------------------------------------------------


def test_criterion_08_comparative_statics_against_resolve():
    t0 = time.perf_counter()
    rng = np.random.default_rng(808)
    h = 1e-6
    for _ in range(20):
        market = random_market(rng, max_types=5)
        out = solve_ipfp(market, tol=1e-13)
        dn = rng.normal(size=market.shape[0])
        dm = rng.normal(size=market.shape[1])
        res = delta_matching(market, out, dn, dm)
        bumped = Market(
            market.men_types, market.women_types, market.n + h * dn, market.m + h * dm, market.tech
        )
        fd = (solve_ipfp(bumped, tol=1e-13).matching.mu_xy - out.matching.mu_xy) / h
        scale = max(np.abs(fd).max(), 1e-12)
        assert np.abs(fd - res.delta_mu).max() / scale < 1e-3

    # one-type closed forms
    n_val, m_val = 1.0, 2.0
    market = Market(("x",), ("y",), [n_val], [m_val], bg.ETU(0.4, -0.1, 0.8, 2.0))
    out = solve_ipfp(market, tol=1e-13)
    mu = out.matching.mu_xy[0, 0]
    du, dv = bg.partials(market.spec(0, 0), out.U[0, 0], out.V[0, 0])
    theta = du * (m_val - mu) * n_val / (du * (m_val - mu) * n_val + dv * (n_val - mu) * m_val)
    dn_val, dm_val = 0.01, -0.004
    res = delta_matching(market, out, [dn_val], [dm_val])
    assert res.delta_mu[0, 0] / mu == pytest.approx(
        theta * dn_val / n_val + (1 - theta) * dm_val / m_val, abs=1e-8
    )
    assert res.delta_U[0, 0] == pytest.approx(
        n_val * (1 - theta) / (n_val - mu) * (dm_val / m_val - dn_val / n_val), abs=1e-8
    )
    assert res.delta_V[0, 0] == pytest.approx(
        m_val * theta / (m_val - mu) * (dn_val / n_val - dm_val / m_val), abs=1e-8
    )

    # more men lowers men's utility and raises women's
    res = delta_matching(market, out, [1.0], [0.0])
    assert res.delta_U[0, 0] < 0.0 < res.delta_V[0, 0]
    _report(8, "matching response matches re-solved equilibria and one-type closed forms", t0, 30.0)


# -- criterion 9 ------------------------------------------------------------


def test_criterion_09_welfare_symmetry_diagnostic():
    t0 = time.perf_counter()
    rng = np.random.default_rng(909)

    # TU benchmark: everything symmetric
    market_tu = random_market(rng, max_types=3, kinds=("TU",))
    out = solve_ipfp(market_tu, tol=1e-13)
    sym = symmetry_diagnostic(market_tu, out)
    assert sym.cross_gap <= 1e-6
    assert np.abs(sym.du_dn - sym.du_dn.T).max() <= 1e-6
    assert np.abs(sym.dv_dm - sym.dv_dm.T).max() <= 1e-6

    # heterogeneous-tau ETU market built around an equilibrium with a
    # uniform transferability ratio: within-side blocks stay symmetric
    # while the cross blocks split apart
    mu = np.array([[0.2, 0.15], [0.1, 0.25]])
    mu_x0 = np.array([0.3, 0.4])
    mu_0y = np.array([0.35, 0.2])
    U = np.log(mu / mu_x0[:, None])
    V = np.log(mu / mu_0y[None, :])
    tau = np.array([[0.3, 2.0], [1.0, 0.5]])
    ratio = 2.0
    q = np.log(2.0 / (1.0 + ratio))
    p = q + np.log(ratio)
    tech = {}
    for i, x in enumerate(("x1", "x2")):
        for j, y in enumerate(("y1", "y2")):
            tech[(x, y)] = bg.ETU(U[i, j] - tau[i, j] * p, V[i, j] - tau[i, j] * q, tau[i, j], 2.0)
    market_etu = Market(("x1", "x2"), ("y1", "y2"), mu_x0 + mu.sum(1), mu_0y + mu.sum(0), tech)
    out = solve_ipfp(market_etu, tol=1e-13)
    sym_etu = symmetry_diagnostic(market_etu, out)
    assert np.abs(sym_etu.du_dn - sym_etu.du_dn.T).max() <= 1e-6
    assert np.abs(sym_etu.dv_dm - sym_etu.dv_dm.T).max() <= 1e-6
    assert sym_etu.cross_gap > 1e-4

    # a constant-slope LTU market: within-side symmetric as well
    market_ltu = Market(
        ("x1", "x2"),
        ("y1", "y2"),
        [1.0, 1.4],
        [0.9, 1.5],
        {
            (x, y): bg.LTU(1.8, 0.6, float(rng.normal()))
            for x in ("x1", "x2")
            for y in ("y1", "y2")
        },
    )
    out = solve_ipfp(market_ltu, tol=1e-13)
    sym_ltu = symmetry_diagnostic(market_ltu, out)
    assert np.abs(sym_ltu.du_dn - sym_ltu.du_dn.T).max() <= 1e-6
    assert np.abs(sym_ltu.dv_dm - sym_ltu.dv_dm.T).max() <= 1e-6
    assert sym_ltu.cross_gap > 1e-4

    _report(
        9,
        f"within-side welfare symmetry on all tested variants; cross gap "
        f"{sym_etu.cross_gap:.3f} on the heterogeneous-tau market",
        t0,
        30.0,
    )


# -- criterion 10 -----------------------------------------------------------


def test_criterion_10_full_assignment():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1010)
    for _ in range(20):
        X = int(rng.integers(1, 9))
        Y = int(rng.integers(1, 9))
        xs = tuple(f"x{i}" for i in range(X))
        ys = tuple(f"y{j}" for j in range(Y))
        n = rng.uniform(0.5, 2.0, size=X)
        m = rng.uniform(0.5, 2.0, size=Y)
        m *= n.sum() / m.sum()
        lam = float(rng.uniform(0.5, 2.0))
        zeta = float(rng.uniform(0.5, 2.0))
        tech = {
            (x, y): (
                bg.LTU(lam, zeta, float(rng.normal()))
                if rng.random() < 0.5
                else bg.LTU(lam, zeta, float(rng.normal(scale=0.5)))
            )
            for x in xs
            for y in ys
        }
        market = Market(xs, ys, n, m, tech)
        matching, _ = solve_full(market, tol=1e-11)
        cols_target = m * n.sum() / m.sum()
        assert np.abs(matching.mu_xy.sum(axis=1) - n).max() <= 1e-10
        assert np.abs(matching.mu_xy.sum(axis=0) - cols_target).max() <= 1e-10

        pin_y = int(rng.integers(0, Y))
        matching2, _ = solve_full(market, tol=1e-11, pin=("y", pin_y), pin_value=0.5)
        assert np.abs(matching.mu_xy - matching2.mu_xy).max() <= 1e-8
    _report(10, "full-assignment accounting and pin invariance on 20 balanced markets", t0, 10.0)


# -- criterion 11 -----------------------------------------------------------


def test_criterion_11_search_steady_state():
    t0 = time.perf_counter()

    def residuals(market, params, out):
        X, Y = market.shape
        d = np.array(
            [
                [bg.evaluate(market.spec(i, j), out.u[i], out.v[j]) for j in range(Y)]
                for i in range(X)
            ]
        )
        accept = d <= 0.0
        gain = np.maximum(0.0, -d)
        s_x, s_y = out.matching.mu_x0, out.matching.mu_0y
        r = [
            out.u - params.rho * (s_y[None, :] * gain).sum(axis=1),
            out.v - params.rho * (s_x[:, None] * gain).sum(axis=0),
            out.matching.mu_xy - params.rho / params.delta_destroy * np.outer(s_x, s_y) * accept,
            s_x + out.matching.mu_xy.sum(axis=1) - market.n,
            s_y + out.matching.mu_xy.sum(axis=0) - market.m,
        ]
        return max(np.abs(x).max() for x in r)

    params = SearchParams(rho=1.0, delta_destroy=1.0, r=0.05)

    trivial = Market(("x",), ("y",), [1.0], [1.0], bg.TU(-50.0))
    out = solve_steady_state(trivial, params, tol=1e-10)
    assert out.u[0] == 0.0 and out.matching.mu_x0[0] == pytest.approx(1.0)
    assert residuals(trivial, params, out) <= 1e-8

    sym_params = SearchParams(rho=1.0, delta_destroy=1.0, r=1.0)
    sym_market = Market(("x",), ("y",), [1.0], [1.0], bg.TU(2.0))
    out = solve_steady_state(sym_market, sym_params, tol=1e-12)
    s = (np.sqrt(5.0) - 1.0) / 2.0  # bisection oracle fixed point of s + s^2 = 1
    assert out.matching.mu_x0[0] == pytest.approx(s, abs=1e-9)
    assert out.u[0] == pytest.approx(s / (1.0 + s), abs=1e-9)
    assert residuals(sym_market, sym_params, out) <= 1e-8

    mixed = Market(
        ("x1", "x2"),
        ("y1", "y2"),
        [1.0, 0.7],
        [0.8, 1.2],
        {
            ("x1", "y1"): bg.TU(1.0),
            ("x1", "y2"): bg.TU(-3.0),
            ("x2", "y1"): bg.ETU(0.5, 0.5, 1.0, 2.0),
            ("x2", "y2"): bg.LTU(1.5, 0.7, 0.6),
        },
    )
    mixed_params = SearchParams(rho=0.8, delta_destroy=0.6, r=0.04)
    out = solve_steady_state(mixed, mixed_params, tol=1e-10)
    assert residuals(mixed, mixed_params, out) <= 1e-8
    _report(11, "steady-state residuals <= 1e-8 on the shipped search test set", t0, 10.0)


# -- criterion 12 -----------------------------------------------------------


def test_criterion_12_one_to_many_reduction():
    t0 = time.perf_counter()
    for phi, n, m in ((1.3, 1.2, 0.9), (0.0, 1.0, 1.0), (2.0, 0.6, 1.8)):
        table = BundleTable(("w",), ("f",), {(0,): {"f": 0.0}, (1,): {"f": phi}})
        res = solve_experimental(table, [n], [m], max_bundle_size=1, tol=1e-12)
        assert res.converged
        pairwise = solve_ipfp(Market(("w",), ("f",), [n], [m], bg.TU(phi)), tol=1e-13)
        assert res.mu_x0[0] == pytest.approx(pairwise.matching.mu_x0[0], abs=1e-8)
        assert res.mu_by[1, 0] == pytest.approx(pairwise.matching.mu_xy[0, 0], abs=1e-8)
        assert np.exp(-res.v[0]) == pytest.approx(pairwise.matching.mu_0y[0], abs=1e-8)

    rng = np.random.default_rng(1212)
    table = BundleTable(
        ("w1", "w2"),
        ("f1",),
        {
            (0, 0): {"f1": 0.0},
            (1, 0): {"f1": 1.0},
            (0, 1): {"f1": 0.8},
            (1, 1): {"f1": 2.1},
            (2, 0): {"f1": 1.7},
            (0, 2): {"f1": 1.2},
        },
    )
    for _ in range(200):
        b = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)][int(rng.integers(0, 6))]
        u = rng.normal(size=2)
        v = float(rng.normal())
        t = float(rng.uniform(-4.0, 4.0))
        d0 = distance_otm(table, b, "f1", u, v)
        d1 = distance_otm(table, b, "f1", u + t, v + t)
        assert d1 - d0 == pytest.approx(t, abs=1e-12)
    _report(12, "bundle economies of size one reproduce the pairwise solver", t0, 5.0)
