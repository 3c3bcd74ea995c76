"""Shared helpers: seeded random instances, components, and subtour sets."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest

from treecvrp.decompose import Params, build_hierarchy
from treecvrp.instance import gen_random_instance, preprocess
from treecvrp.local import ComponentView, Subtour, build_component_view, make_subtour

F = Fraction


def random_feasible_subtours(
    view: ComponentView, rng: random.Random, max_subtours: int = 6
) -> list[Subtour]:
    """A random set of subtours jointly covering the component's terminals.

    Internal components always get at least one passing subtour, mirroring a
    global solution in which the terminals below the exit are someone's
    responsibility.
    """
    terms = list(view.terminals())
    if not terms:
        return []
    k = rng.randint(1, min(max_subtours, len(terms)))
    groups: list[list[int]] = [[] for _ in range(k)]
    for t in terms:
        groups[rng.randrange(k)].append(t)
    groups = [g for g in groups if g]
    subs = []
    for i, group in enumerate(groups):
        passing = view.exit is not None and (i == 0 or rng.random() < 0.5)
        subs.append(make_subtour(view, group, passing=passing))
    return subs


def components_with_subtours(
    n_components: int,
    seed: int,
    *,
    eps=F(1, 2),
    gamma=F(3),
    gamma_prime=F(1, 40),
    n_range=(6, 13),
    denom=256,
    max_subtours: int = 6,
):
    """Yield (view, params, subtours) triples from seeded random instances."""
    rng = random.Random(seed)
    p = Params.from_eps(eps, gamma=gamma, gamma_prime=gamma_prime)
    produced = 0
    batch = 0
    while produced < n_components:
        inst = gen_random_instance(
            rng.randint(*n_range), seed * 1009 + batch, demands="dyadic", denom=denom
        )
        batch += 1
        pre = preprocess(inst)
        h = build_hierarchy(pre, p)
        for ci in range(len(h.components)):
            view = build_component_view(h, ci)
            if not view.terminals():
                continue
            subs = random_feasible_subtours(view, rng, max_subtours)
            if not subs:
                continue
            yield view, p, subs
            produced += 1
            if produced >= n_components:
                return


@pytest.fixture(scope="session")
def small_instances():
    """A pool of seeded random instances for oracle comparisons."""
    return [gen_random_instance(3 + s % 8, 5000 + s) for s in range(40)]
