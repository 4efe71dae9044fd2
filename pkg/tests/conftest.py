"""Shared generators for randomized technology and market tests."""

from __future__ import annotations

import numpy as np
import pytest

from itu_match import bargaining as bg
from itu_match.equilibrium import Market

SMOOTH_KINDS = ("TU", "LTU", "ETU")
ALL_KINDS = ("TU", "NTU", "LTU", "ETU", "TaxSchedule", "PublicGoods", "Union", "Intersection")


def random_spec(rng: np.random.Generator, kinds=ALL_KINDS, depth: int = 0) -> bg.DistanceSpec:
    """One random well-formed technology; combinators recurse two levels."""
    kind = rng.choice([k for k in kinds if depth < 2 or k not in ("Union", "Intersection")])
    if kind == "TU":
        return bg.TU(phi=float(rng.normal(scale=1.5)))
    if kind == "NTU":
        return bg.NTU(alpha=float(rng.normal()), gamma=float(rng.normal()))
    if kind == "LTU":
        return bg.LTU(
            lam=float(rng.uniform(0.2, 3.0)),
            zeta=float(rng.uniform(0.2, 3.0)),
            phi=float(rng.normal(scale=1.5)),
        )
    if kind == "ETU":
        return bg.ETU(
            alpha=float(rng.normal()),
            gamma=float(rng.normal()),
            tau=float(rng.uniform(0.1, 4.0)),
            budget=float(rng.uniform(0.5, 4.0)),
        )
    if kind == "TaxSchedule":
        k = int(rng.integers(1, 4))
        thresholds = np.sort(rng.uniform(0.5, 4.0, size=k))
        rates = np.sort(rng.uniform(0.0, 0.9, size=k + 1))
        if len(set(rates)) < k + 1:  # enforce strict increase
            rates = np.linspace(0.05, 0.8, k + 1)
        return bg.TaxSchedule(
            alpha=float(rng.normal()),
            gamma=float(rng.normal()),
            thresholds=tuple(float(t) for t in thresholds),
            rates=tuple(float(r) for r in rates),
        )
    if kind == "PublicGoods":
        g = int(rng.integers(1, 4))
        return bg.PublicGoods(
            options=tuple(
                bg.PublicGoodsOption(
                    alpha=float(rng.normal()),
                    gamma=float(rng.normal()),
                    budget=float(rng.uniform(0.5, 4.0)),
                )
                for _ in range(g)
            ),
            tau=float(rng.uniform(0.2, 3.0)),
        )
    children = tuple(
        random_spec(rng, kinds=("TU", "NTU", "LTU", "ETU"), depth=depth + 1)
        for _ in range(int(rng.integers(1, 4)))
    )
    return bg.Union(children) if kind == "Union" else bg.Intersection(children)


def random_smooth_spec(rng: np.random.Generator) -> bg.DistanceSpec:
    return random_spec(rng, kinds=SMOOTH_KINDS)


def random_market(
    rng: np.random.Generator,
    max_types: int = 10,
    kinds=SMOOTH_KINDS,
    union_children=None,
    sigma: float = 1.0,
) -> Market:
    """A random market with strictly positive masses and per-pair specs.

    ``union_children`` turns some cells into unions of smooth specs (still
    infinite wedge bounds, so both solvers apply).
    """
    X = int(rng.integers(1, max_types + 1))
    Y = int(rng.integers(1, max_types + 1))
    xs = tuple(f"x{i}" for i in range(X))
    ys = tuple(f"y{j}" for j in range(Y))
    tech = {}
    for x in xs:
        for y in ys:
            if union_children and rng.random() < 0.3:
                kids = tuple(random_spec(rng, kinds=union_children, depth=2) for _ in range(2))
                tech[(x, y)] = bg.Union(kids)
            else:
                tech[(x, y)] = random_spec(rng, kinds=kinds, depth=2)
    return Market(
        men_types=xs,
        women_types=ys,
        n=rng.uniform(0.4, 2.5, size=X),
        m=rng.uniform(0.4, 2.5, size=Y),
        tech=tech,
        sigma=sigma,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
