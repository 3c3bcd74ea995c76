"""Instance model: parsing, preprocessing, costs, feasibility, generators."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treecvrp.baselines import binpacking_opt, exact_opt
from treecvrp.instance import (
    Instance,
    ParseError,
    Solution,
    Tour,
    UcvrpError,
    check_bounded_distance,
    check_feasible,
    format_rational,
    gen_binpacking_path,
    gen_binpacking_star,
    gen_random_instance,
    parse_instance,
    parse_rational,
    parse_solution,
    preprocess,
    preprocess_with_origin,
    tour_cost,
    write_instance,
    write_solution,
)

F = Fraction


def test_parse_two_vertex_instance():
    inst = parse_instance("ucvrp 1\nv 0 -1 0\nv 1 0 1.0\nt 1 0.5\n")
    assert inst.n == 2
    assert inst.root == 0
    assert inst.demand == {1: F(1, 2)}
    assert inst.weight[1] == 1


def test_parse_rejects_demand_outside_range():
    with pytest.raises(ParseError, match=r"demand outside \(0,1\]"):
        parse_instance("ucvrp 1\nv 0 -1 0\nv 1 0 1\nt 1 1.5\n")
    with pytest.raises(ParseError, match=r"demand outside \(0,1\]"):
        parse_instance("ucvrp 1\nv 0 -1 0\nv 1 0 1\nt 1 0\n")


def test_parse_rejects_negative_weight():
    with pytest.raises(ParseError, match="negative weight"):
        parse_instance("ucvrp 1\nv 0 -1 0\nv 1 0 -1\nt 1 0.5\n")


def test_parse_errors_carry_line_numbers():
    try:
        parse_instance("ucvrp 1\nv 0 -1 0\nv 1 0 1\nt 1 2.0\n")
    except ParseError as exc:
        assert "line 4" in str(exc)
    else:
        pytest.fail("expected a parse error")


def test_parse_rejects_cycles():
    with pytest.raises(ParseError, match="cyclic"):
        parse_instance("ucvrp 1\nv 0 -1 0\nv 1 2 1\nv 2 1 1\nt 1 0.5\n")


def test_parse_rejects_sparse_ids():
    with pytest.raises(ParseError, match="dense"):
        parse_instance("ucvrp 1\nv 0 -1 0\nv 2 0 1\nt 2 0.5\n")


def test_instance_roundtrip():
    inst = gen_random_instance(9, 17)
    again = parse_instance(write_instance(inst))
    assert again.parent == inst.parent
    assert again.weight == inst.weight
    assert again.demand == inst.demand
    # byte input is accepted as well
    assert parse_instance(write_instance(inst).encode()).demand == inst.demand


def test_rational_formatting_roundtrip():
    for text in ["0.5", "0.125", "1", "0.000000000000000001", "3/7"]:
        x = parse_rational(text)
        assert parse_rational(format_rational(x)) == x
    assert format_rational(F(3, 10)) == "0.3"
    assert format_rational(F(1, 3)) == "1/3"


# --- tour_cost ---------------------------------------------------------------


def _dfs_walk_cost(inst: Instance, terminals) -> Fraction:
    """Independent oracle: cost of the explicit DFS closed walk over the
    spanning subtree of the terminal set."""
    needed = set()
    for t in terminals:
        v = t
        while v != inst.root and v not in needed:
            needed.add(v)
            v = inst.parent[v]
    total = F(0)
    stack = [inst.root]
    while stack:
        v = stack.pop()
        for c in inst.children(v):
            if c in needed:
                total += 2 * inst.weight[c]  # walk down and back up
                stack.append(c)
    return total


def test_tour_cost_examples():
    inst = Instance((None, 0, 1, 1), (F(0), F(2), F(3), F(5)), 0, {2: F(1, 2), 3: F(1, 2)})
    assert tour_cost(inst, set()) == 0
    assert tour_cost(inst, {2, 3}) == 20
    with pytest.raises(UcvrpError, match="unknown vertex"):
        tour_cost(inst, {9})


def test_tour_cost_matches_dfs_walk():
    rng = random.Random(4)
    for seed in range(25):
        inst = gen_random_instance(rng.randint(2, 10), seed)
        terms = list(inst.terminals())
        subset = {t for t in terms if rng.random() < 0.6}
        assert tour_cost(inst, subset) == _dfs_walk_cost(inst, subset)


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_tour_cost_monotone_and_subadditive(data):
    seed = data.draw(st.integers(0, 10_000))
    inst = gen_random_instance(data.draw(st.integers(2, 9)), seed)
    terms = list(inst.terminals())
    s1 = {t for t in terms if data.draw(st.booleans())}
    s2 = {t for t in terms if data.draw(st.booleans())}
    assert tour_cost(inst, s1) <= tour_cost(inst, s1 | s2)
    assert tour_cost(inst, s1 | s2) <= tour_cost(inst, s1) + tour_cost(inst, s2)


# --- feasibility -------------------------------------------------------------


def test_check_feasible_clean():
    inst = gen_binpacking_path([F("0.4"), F("0.5")])
    sol = Solution((Tour(frozenset({1, 2})),))
    assert check_feasible(inst, sol).ok


def test_check_feasible_capacity_excess():
    inst = gen_binpacking_path([F("0.51"), F("0.5")])
    sol = Solution((Tour(frozenset({1, 2})),))
    report = check_feasible(inst, sol)
    assert not report.ok
    assert report.capacity_excess == ((0, F(1, 100)),)
    assert any("capacity of 1" in m for m in report.messages())


def test_check_feasible_unsplittable_and_coverage():
    inst = gen_binpacking_path([F("0.3"), F("0.3"), F("0.3")])
    sol = Solution((Tour(frozenset({1, 2})), Tour(frozenset({2}))))
    report = check_feasible(inst, sol)
    assert report.double_covered == (2,)
    assert report.uncovered == (3,)


# --- bounded distance --------------------------------------------------------


def test_bounded_distance_threshold():
    # eps = 1/2 gives the factor 2^1 = 2
    def path(dists):
        parent = [None] + [0] * len(dists)
        weight = [F(0)] + [F(d) for d in dists]
        demand = {i + 1: F(1, 2) for i in range(len(dists))}
        return Instance(tuple(parent), tuple(weight), 0, demand)

    assert check_bounded_distance(path(["1", "1.9"]), F(1, 2)) is True
    assert check_bounded_distance(path(["1", "2"]), F(1, 2)) is False
    assert check_bounded_distance(path(["5"]), F(1, 2)) is True
    with pytest.raises(UcvrpError, match="no terminals"):
        check_bounded_distance(Instance((None,), (F(0),), 0, {}), F(1, 2))


# --- preprocessing -----------------------------------------------------------


def test_preprocess_keeps_simple_path():
    inst = parse_instance("ucvrp 1\nv 0 -1 0\nv 1 0 2\nt 1 0.5\n")
    pre = preprocess(inst)
    assert pre.n == 2
    assert pre.weight[1] == 2
    assert pre.demand == {1: F(1, 2)}


def test_preprocess_splits_internal_terminal():
    # terminal at an internal vertex moves to a zero-weight pendant leaf
    inst = Instance((None, 0, 1), (F(0), F(1), F(1)), 0, {1: F(1, 4), 2: F(1, 2)})
    pre, origin = preprocess_with_origin(inst)
    for t, d in pre.demand.items():
        assert pre.is_leaf(t)
    assert sorted(origin.values()) == [1, 2]
    dists = sorted(pre.dist_root(t) for t in pre.demand)
    assert dists == [1, 2]


def test_preprocess_binarizes_and_every_internal_has_two_children():
    inst = Instance(
        (None, 0, 0, 0, 0),
        (F(0), F(1), F(2), F(3), F(4)),
        0,
        {1: F(1, 2), 2: F(1, 2), 3: F(1, 2), 4: F(1, 2)},
    )
    pre = preprocess(inst)
    for v in pre.vertices():
        if not pre.is_leaf(v):
            assert v not in pre.demand
            if v != pre.root:
                assert len(pre.children(v)) == 2
    assert set(pre.demand.values()) == {F(1, 2)}


def test_preprocess_preserves_optimum():
    for seed in range(50):
        inst = gen_random_instance(2 + seed % 9, 900 + seed)
        pre = preprocess(inst)
        assert exact_opt(pre).cost == exact_opt(inst).cost


def test_preprocess_prunes_barren_leaves():
    inst = Instance((None, 0, 0), (F(0), F(1), F(5)), 0, {1: F(1, 2)})
    pre = preprocess(inst)
    assert pre.n == 2
    assert exact_opt(pre).cost == 2


# --- generators --------------------------------------------------------------


def test_binpacking_path_generator():
    sizes = [F("0.6"), F("0.6"), F("0.4"), F("0.4")]
    inst = gen_binpacking_path(sizes)
    assert exact_opt(inst).cost == 4
    assert exact_opt(inst).cost == 2 * binpacking_opt(sizes)
    assert exact_opt(gen_binpacking_path([F(1)])).cost == 2
    assert exact_opt(gen_binpacking_path([F(1, 2)] * 3)).cost == 4
    with pytest.raises(UcvrpError, match="empty"):
        gen_binpacking_path([])


def test_binpacking_star_generator():
    sizes = [F("0.6"), F("0.6"), F("0.4"), F("0.4")]
    inst = gen_binpacking_star(sizes)
    assert exact_opt(inst).cost == 4
    assert exact_opt(gen_binpacking_star([F("0.3")])).cost == 2
    k = 5
    assert exact_opt(gen_binpacking_star([F(1)] * k)).cost == 2 * k


def test_random_generator_is_deterministic_and_valid():
    a = gen_random_instance(10, 42)
    b = gen_random_instance(10, 42)
    assert write_instance(a) == write_instance(b)
    assert len(a.demand) == 10
    for t, d in a.demand.items():
        assert a.is_leaf(t)
        assert 0 < d <= 1


# --- solution files ----------------------------------------------------------


def test_solution_roundtrip():
    sol = Solution((Tour(frozenset({1, 2}), F(1, 8)), Tour(frozenset({3}))))
    text = write_solution(sol)
    again = parse_solution(text)
    assert {t.terminals for t in again.tours} == {frozenset({1, 2}), frozenset({3})}
    assert sorted(t.dummy for t in again.tours) == [F(0), F(1, 8)]
