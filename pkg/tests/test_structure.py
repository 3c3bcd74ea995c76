"""Height reduction, value sets, and the adaptive rounding kernel."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treecvrp.decompose import Params, build_hierarchy
from treecvrp.instance import (
    Instance,
    Solution,
    Tour,
    UcvrpError,
    check_bounded_distance,
    check_feasible,
    gen_random_instance,
    preprocess,
    solution_cost,
)
from treecvrp.structure import (
    adaptive_round,
    build_value_sets,
    component_parts,
    height_reduce,
    map_back,
    reduced_instance,
)

F = Fraction


def _multi_component_instance(seed):
    inst = preprocess(gen_random_instance(8 + seed % 5, 4000 + seed))
    p = Params.from_eps(F(1, 2), gamma=F(1), gamma_prime=F(1, 8))
    return inst, p


# --- height reduction ---------------------------------------------------------


def test_single_component_is_unchanged():
    inst = preprocess(gen_random_instance(4, 2))
    p = Params.from_eps(F(1, 2))
    rt = height_reduce(inst, p)
    assert len(rt.hierarchy.components) == 1
    assert rt.critical_of == {0: inst.root}
    assert rt.attach_weight == {0: F(0)}
    assert rt.critical_vertices == frozenset({inst.root})
    red, origin = reduced_instance(rt)
    # the only surgery is the zero-weight copy of the depot-rooted component
    assert solution_cost(red, Solution((Tour(frozenset(red.demand)),))) == solution_cost(
        inst, Solution((Tour(frozenset(inst.demand)),))
    )


def test_band_count_formula():
    p = Params.from_eps(F(1, 2))
    assert p.h_eps == 32  # (1/eps)^(2/eps + 1) = 2^5


def test_bands_within_range_for_bounded_instances():
    for seed in range(30):
        inst, p = _multi_component_instance(seed)
        rt = height_reduce(inst, p)
        assert all(band >= 1 for band in rt.band_of.values())
        if check_bounded_distance(inst, p.eps):
            assert all(band <= p.h_eps for band in rt.band_of.values())


def test_reattachment_weight_is_tree_distance():
    # two components where the deeper root re-attaches to the critical vertex
    # with exactly the original distance between the roots
    for seed in range(40):
        inst, p = _multi_component_instance(seed)
        rt = height_reduce(inst, p)
        h = rt.hierarchy
        if len(h.components) < 2:
            continue
        for ci, z in rt.critical_of.items():
            r_c = h.components[ci].root_vertex
            assert rt.attach_weight[ci] == inst.dist_root(r_c) - inst.dist_root(z)
            assert rt.attach_weight[ci] >= 0
        return
    pytest.fail("no multi-component instance produced")


def test_components_survive_reduction_identically():
    for seed in range(10):
        inst, p = _multi_component_instance(seed)
        rt = height_reduce(inst, p)
        red, origin = reduced_instance(rt)
        h = rt.hierarchy
        for ci, comp in enumerate(h.components):
            copy = inst.n + ci  # copies are appended in component order
            assert origin[copy] == comp.root_vertex
            assert red.weight[copy] == rt.attach_weight[ci]
            assert red.parent[copy] == rt.critical_of[ci]
            for e in comp.edges:
                assert red.weight[e] == inst.weight[e]
                expected_parent = inst.parent[e]
                if expected_parent == comp.root_vertex:
                    assert red.parent[e] == copy
                else:
                    assert red.parent[e] == expected_parent
        assert red.demand == inst.demand


def test_map_back_identity_tours_and_cost_bound():
    for seed in range(50):
        inst, p = _multi_component_instance(seed)
        rt = height_reduce(inst, p)
        red, _ = reduced_instance(rt)
        rng = random.Random(seed)
        # random feasible partition of the terminals on the reduced tree
        terms = sorted(red.demand)
        tours = []
        current: list[int] = []
        load = F(0)
        for t in terms:
            if current and (load + red.demand[t] > 1 or rng.random() < 0.3):
                tours.append(Tour(frozenset(current)))
                current, load = [], F(0)
            current.append(t)
            load += red.demand[t]
        if current:
            tours.append(Tour(frozenset(current)))
        sol = Solution(tuple(tours))
        assert check_feasible(red, sol).ok
        mapped = map_back(rt, sol)
        assert check_feasible(inst, mapped).ok
        assert solution_cost(inst, mapped) <= solution_cost(red, sol)
        assert {t.terminals for t in mapped.tours} == {t.terminals for t in sol.tours}


def test_map_back_rejects_infeasible():
    inst, p = _multi_component_instance(1)
    rt = height_reduce(inst, p)
    sol = Solution((Tour(frozenset(inst.demand), dummy=F(2)),))
    with pytest.raises(UcvrpError, match="infeasible"):
        map_back(rt, sol)


def test_terminal_at_depot_rejected():
    inst = Instance((None, 0), (F(0), F(0)), 0, {1: F(1, 2)})
    p = Params.from_eps(F(1, 2))
    with pytest.raises(UcvrpError, match="depot"):
        height_reduce(inst, p)


# --- value sets ---------------------------------------------------------------


def test_value_set_single_cell_example():
    # one cell with small-terminal demand 0.3 and alpha = 1/8 gives {1/8, 3/10}
    inst = Instance(
        (None, 0, 1, 1), (F(0), F(1), F(0), F(0)), 0, {2: F("0.1"), 3: F("0.2")}
    )
    pre = preprocess(inst)
    p = Params.from_eps(F(1, 2), gamma=F(4), gamma_prime=F(1, 2))
    h = build_hierarchy(pre, p)
    vs = build_value_sets(h, p)
    assert len(h.components) == 1
    # both terminals are small and in cells; the subset sums meeting (alpha, 1]
    values = set(vs.y_c[0])
    assert F(1, 8) in values
    assert F(3, 10) in values


def test_value_set_no_terminals():
    inst = Instance((None, 1, 0), (F(0), F(1), F(1)), 1, {})
    # build a tree with edges but no terminals: prune leaves manually
    inst = Instance((None, 0), (F(0), F(2)), 0, {1: F(1, 2)})
    pre = preprocess(inst)
    p = Params.from_eps(F(1, 2))
    h = build_hierarchy(pre, p)
    vs = build_value_sets(h, p)
    # the single big terminal forms one singleton part; alpha is always present
    assert p.alpha in set(vs.y_c[0])


def test_value_set_closure():
    for seed in range(20):
        inst = preprocess(gen_random_instance(3 + seed % 6, 600 + seed))
        p = Params.from_eps(F(1, 2), gamma=F(2), gamma_prime=F(1, 4))
        h = build_hierarchy(inst, p)
        vs = build_value_sets(h, p)
        y = set(vs.y)
        for ci, yc in vs.y_c.items():
            assert set(yc) <= y
        values = sorted(y)
        for a in values[:20]:
            for b in values[:20]:
                if a + b <= 1:
                    assert a + b in y
        assert all(p.alpha <= v <= 1 for v in y)


def test_value_set_parts_partition_terminals():
    for seed in range(20):
        inst = preprocess(gen_random_instance(4 + seed % 7, 700 + seed))
        p = Params.from_eps(F(1, 2), gamma=F(2), gamma_prime=F(1, 4))
        h = build_hierarchy(inst, p)
        for ci in range(len(h.components)):
            parts = component_parts(h, ci)
            seen = set()
            for part in parts:
                assert not (seen & part.terminals)
                seen |= part.terminals
                if part.big:
                    assert len(part.terminals) == 1
                    (t,) = part.terminals
                    assert inst.demand[t] > p.gamma_prime
                else:
                    assert all(inst.demand[t] <= p.gamma_prime for t in part.terminals)
            assert seen == set(h.component_terminals(ci))


def test_value_set_cap_fails_loudly():
    inst = preprocess(gen_random_instance(10, 9, demands="uniform"))
    p = Params.from_eps(F(1, 2))
    h = build_hierarchy(inst, p)
    from treecvrp.instance import CapExceeded

    with pytest.raises(CapExceeded):
        build_value_sets(h, p, cap=3)


# --- adaptive rounding --------------------------------------------------------


def test_adaptive_round_worked_example():
    # groups (0.2,0.2) (0.3,0.4) (0.5,0.6): maxima 0.2, 0.4; last group dropped
    demands = [F("0.2"), F("0.2"), F("0.3"), F("0.4"), F("0.5"), F("0.6")]
    rounded, discarded = adaptive_round(demands, F(1, 3))
    assert rounded == [F("0.2"), F("0.2"), F("0.4"), F("0.4")]
    assert discarded == [F("0.5"), F("0.6")]
    # hand re-check of the mechanics: each stand-in is dominated by the
    # original it replaces
    originals = [F("0.3"), F("0.4"), F("0.5"), F("0.6")]
    assert all(r <= o for r, o in zip(rounded, originals))


def test_adaptive_round_identity_when_few():
    demands = [F("0.7"), F("0.1")]
    rounded, discarded = adaptive_round(demands, F(1, 3))
    assert sorted(rounded) == sorted(demands)
    assert discarded == []


def test_adaptive_round_all_equal():
    rounded, discarded = adaptive_round([F(1, 4)] * 8, F(1, 4))
    assert set(rounded) == {F(1, 4)}
    assert discarded == [F(1, 4), F(1, 4)]


def test_adaptive_round_rejects_bad_beta():
    with pytest.raises(UcvrpError, match="1/beta"):
        adaptive_round([F(1, 2)], F(2, 5))
    with pytest.raises(UcvrpError, match="empty"):
        adaptive_round([], F(1, 2))


@given(
    st.lists(st.integers(1, 64), min_size=1, max_size=40),
    st.integers(2, 6),
)
@settings(max_examples=120, deadline=None)
def test_adaptive_round_properties(nums, k):
    demands = [F(x, 64) for x in nums]
    rounded, discarded = adaptive_round(demands, F(1, k))
    assert len(set(rounded)) <= k
    values = sorted(demands)
    m = len(values)
    if m <= k:
        assert rounded == values and discarded == []
        return
    size = -(-m // k)
    padded = [F(0)] * (k * size - m) + values
    groups = [padded[i * size : (i + 1) * size] for i in range(k)]
    # group cardinalities equal after padding
    assert all(len(g) == size for g in groups)
    # entrywise dominance: stand-ins never exceed the originals they replace
    for i in range(k - 1):
        stand_ins = rounded[i * size : (i + 1) * size]
        replaced = groups[i + 1]
        assert all(r <= o for r, o in zip(stand_ins, replaced))
        # and each stand-in dominates the group entries it rounded up
        assert all(x <= max(groups[i]) for x in groups[i])
    assert discarded == groups[-1]
    assert sum(discarded) <= sum(demands)
