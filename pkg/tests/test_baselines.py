"""Oracles and tour-partitioning heuristics."""

import random
from fractions import Fraction
from itertools import product

import pytest

from treecvrp.baselines import binpacking_opt, exact_opt, itp_heuristic
from treecvrp.decompose import Params
from treecvrp.instance import (
    UcvrpError,
    check_feasible,
    gen_binpacking_path,
    gen_binpacking_star,
    gen_random_instance,
    solution_cost,
    tour_cost,
)

F = Fraction


def _brute_force_partitions(inst) -> Fraction:
    """Independent oracle: enumerate every set partition of the terminals."""
    terms = list(inst.terminals())

    def rec(i, groups):
        if i == len(terms):
            total = F(0)
            for g in groups:
                if sum((inst.demand[t] for t in g), F(0)) > 1:
                    return None
                total += tour_cost(inst, g)
            return total
        best = None
        t = terms[i]
        for g in groups:
            g.append(t)
            got = rec(i + 1, groups)
            if got is not None and (best is None or got < best):
                best = got
            g.pop()
        groups.append([t])
        got = rec(i + 1, groups)
        if got is not None and (best is None or got < best):
            best = got
        groups.pop()
        return best

    return rec(0, [])


def test_exact_opt_examples():
    inst = gen_random_instance(1, 12)
    (t,) = inst.terminals()
    assert exact_opt(inst).cost == 2 * inst.dist_root(t)
    assert exact_opt(gen_binpacking_path([F("0.6")] * 2)).cost == 4
    res = exact_opt(gen_binpacking_path([F("0.6"), F("0.6"), F("0.4"), F("0.4")]))
    assert res.cost == 4
    assert check_feasible(gen_binpacking_path([F("0.6"), F("0.6"), F("0.4"), F("0.4")]), res.solution).ok
    assert res.cost == solution_cost(
        gen_binpacking_path([F("0.6"), F("0.6"), F("0.4"), F("0.4")]), res.solution
    )


def test_exact_opt_limit():
    inst = gen_random_instance(6, 1)
    with pytest.raises(UcvrpError, match="limited"):
        exact_opt(inst, limit=5)


def test_exact_opt_matches_brute_force():
    rng = random.Random(10)
    for seed in range(20):
        inst = gen_random_instance(rng.randint(1, 6), 1300 + seed)
        assert exact_opt(inst).cost == _brute_force_partitions(inst)


def test_binpacking_opt_examples():
    assert binpacking_opt([F("0.6"), F("0.6"), F("0.4"), F("0.4")]) == 2
    assert binpacking_opt([F(1), F(1)]) == 2
    assert binpacking_opt([]) == 0
    with pytest.raises(UcvrpError, match="limited"):
        binpacking_opt([F(1, 2)] * 13)


def test_binpacking_opt_matches_enumeration():
    rng = random.Random(3)
    for _ in range(20):
        sizes = [F(rng.randint(1, 16), 16) for _ in range(rng.randint(1, 6))]
        best = len(sizes)
        for assign_v in product(range(len(sizes)), repeat=len(sizes)):
            loads = {}
            for i, b in enumerate(assign_v):
                loads[b] = loads.get(b, F(0)) + sizes[i]
            if all(v <= 1 for v in loads.values()):
                best = min(best, len(loads))
        assert binpacking_opt(sizes) == best


def test_reduction_identity_path_and_star():
    rng = random.Random(20)
    for _ in range(25):
        sizes = [F(rng.randint(1, 16), 16) for _ in range(rng.randint(1, 8))]
        bins = binpacking_opt(sizes)
        assert exact_opt(gen_binpacking_path(sizes)).cost == 2 * bins
        assert exact_opt(gen_binpacking_star(sizes)).cost == 2 * bins


def test_itp_nextfit_examples():
    p = Params.from_eps(F(1, 2))
    inst = gen_random_instance(1, 4)
    sol = itp_heuristic(inst, p, "nextfit")
    assert len(sol.tours) == 1
    path = gen_binpacking_path([F("0.6")] * 3)
    sol = itp_heuristic(path, p, "nextfit")
    assert len(sol.tours) == 3
    assert check_feasible(path, sol).ok


def test_itp_low_demand_segment_sizes():
    # 25 terminals of demand 0.1 with alpha = 1/8: segments close at >= 0.875,
    # i.e. after 9, 9, and finally 7 terminals
    sizes = [F(1, 10)] * 25
    inst = gen_binpacking_path(sizes)
    p = Params.from_eps(F(1, 2), alpha=F(1, 8))
    sol = itp_heuristic(inst, p, "lowdemand")
    lengths = sorted(len(t.terminals) for t in sol.tours)
    assert lengths == [7, 9, 9]
    demands = sorted(
        sum((inst.demand[t] for t in tour.terminals), F(0)) for tour in sol.tours
    )
    assert demands == [F("0.7"), F("0.9"), F("0.9")]
    assert check_feasible(inst, sol).ok


def test_itp_low_demand_requires_small_demands():
    inst = gen_binpacking_path([F("0.5")])
    p = Params.from_eps(F(1, 2))
    with pytest.raises(UcvrpError, match="alpha"):
        itp_heuristic(inst, p, "lowdemand")


def test_itp_low_demand_nonfinal_segments_in_band():
    rng = random.Random(17)
    p = Params.from_eps(F(1, 2), alpha=F(1, 8))
    for seed in range(25):
        n = rng.randint(1, 30)
        sizes = [F(rng.randint(1, 8), 64) for _ in range(n)]  # all <= 1/8
        inst = gen_binpacking_path(sizes)
        sol = itp_heuristic(inst, p, "lowdemand")
        assert check_feasible(inst, sol).ok
        # recover the segment order: tours were built in dfs order
        loads = [
            sum((inst.demand[t] for t in tour.terminals), F(0)) for tour in sol.tours
        ]
        for load in loads[:-1]:
            assert 1 - p.alpha <= load <= 1
        # heuristics never beat the oracle
        if n <= 12:
            assert solution_cost(inst, sol) >= exact_opt(inst).cost


def test_itp_feasible_and_dominated_by_oracle():
    rng = random.Random(30)
    p = Params.from_eps(F(1, 2))
    for seed in range(20):
        inst = gen_random_instance(rng.randint(1, 10), 1500 + seed)
        sol = itp_heuristic(inst, p, "nextfit")
        assert check_feasible(inst, sol).ok
        assert solution_cost(inst, sol) >= exact_opt(inst).cost


def test_itp_unknown_mode():
    inst = gen_random_instance(2, 2)
    with pytest.raises(UcvrpError, match="unknown itp mode"):
        itp_heuristic(inst, Params.from_eps(F(1, 2)), "fancy")
