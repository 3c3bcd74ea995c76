"""Two-phase dynamic program over the height-reduced tree.

Phase one enumerates, per component, the cheapest collections of subtours
serving the component's terminal parts (whole cells or single big terminals)
under per-subtour demand values drawn from that component's value set.  Phase
two combines tables bottom-up: at a component root, passing subtours absorb
subtours of the exit subtree (unmatched exit subtours pay the spine subtour
both ways); at a critical vertex, child subtrees are scanned left to right,
merging subtours whose padded demands sum to at most one.

All demands are scaled to a common integer denominator and all weights to
another, so the inner loops run on machine integers while staying exact.
Every table entry keeps an explicit witness (the padded demand and terminal
set of each in-progress tour), which makes the final traceback a projection
and lets tests re-cost the output exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Optional

from .decompose import Hierarchy, Params, build_hierarchy, spine_weight
from .instance import (
    CapExceeded,
    Instance,
    Solution,
    Tour,
    UcvrpError,
    ZERO,
    preprocess_with_origin,
    solution_cost,
)
from .local import ComponentView, build_component_view
from .structure import ReducedTree, ValueSets, build_value_sets, height_reduce, reduced_instance

# a witness piece is one in-progress tour: (padded demand, covered terminals)
Piece = tuple[int, frozenset]


@dataclass
class Caps:
    y_cap: int = 200_000
    cfg_len: int = 12
    x_budget: int = 10_000
    table_cap: int = 2_000_000


@dataclass
class SolveStats:
    n_terminals: int
    n_components: int
    y_size: int
    table_entries: int
    cost: Fraction
    table_cost: Fraction
    reduced_cost: Fraction
    oracle_cost: Optional[Fraction] = None


@dataclass
class _Ctx:
    inst: Instance
    params: Params
    h: Hierarchy
    rt: ReducedTree
    vs: ValueSets
    views: list[ComponentView]
    dscale: int
    wscale: int
    alpha_i: int
    y_values: frozenset[int]
    caps: Caps
    entries: int = 0

    def bump(self, k: int = 1) -> None:
        self.entries += k
        if self.entries > self.caps.table_cap:
            raise CapExceeded(f"dynamic program exceeded {self.caps.table_cap} table entries")


def _lcm(values) -> int:
    out = 1
    for v in values:
        out = out * v // math.gcd(out, v)
    return out


def _scale_check(x: Fraction, scale: int, what: str) -> int:
    v = x * scale
    if v.denominator != 1:
        raise UcvrpError(f"{what} {x} does not fit the common denominator {scale}")
    return v.numerator


# ---------------------------------------------------------------------------
# Phase one: tables inside a component
# ---------------------------------------------------------------------------


def local_config_values(view: ComponentView, vs: ValueSets, ctx: _Ctx) -> dict:
    """Exhaustive minimum cost per local configuration.

    Key: sorted tuple of (padded demand, kind) pairs, one per subtour.  Value:
    (cost, partition) where the partition lists (terminals, padded demand,
    kind) per subtour.  Partitions use nonempty groups only, so the number of
    pairs never exceeds the number of parts.
    """
    inst = view.inst
    parts = vs.q_c[view.ci]
    k = len(parts)
    if k == 0:
        return {(): (0, ())}
    if k > ctx.caps.cfg_len:
        raise CapExceeded(
            f"component {view.comp.rid} has {k} terminal parts > configuration cap "
            f"{ctx.caps.cfg_len}"
        )
    dscale = ctx.dscale
    demand_i = [_scale_check(part.demand, dscale, "part demand") for part in parts]

    edge_index = {e: i for i, e in enumerate(sorted(view.comp.edges))}
    edge_w = [0] * len(edge_index)
    for e, i in edge_index.items():
        edge_w[i] = _scale_check(inst.weight[e], ctx.wscale, "edge weight")

    def path_mask(v: int) -> int:
        m = 0
        while v != view.root:
            m |= 1 << edge_index[v]
            v = inst.parent[v]
        return m

    part_mask = []
    for part in parts:
        m = 0
        for t in sorted(part.terminals):
            m |= path_mask(t)
        part_mask.append(m)
    exit_mask = path_mask(view.exit) if view.exit is not None else 0

    weight_memo: dict[int, int] = {0: 0}

    def mask_weight(m: int) -> int:
        got = weight_memo.get(m)
        if got is None:
            got = 0
            mm = m
            while mm:
                low = mm & -mm
                got += edge_w[low.bit_length() - 1]
                mm ^= low
            weight_memo[m] = got
        return got

    full = (1 << k) - 1
    load = [0] * (full + 1)
    union = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        i = low.bit_length() - 1
        load[mask] = load[mask ^ low] + demand_i[i]
        union[mask] = union[mask ^ low] | part_mask[i]

    kinds = ("ending", "passing") if view.exit is not None else ("ending",)
    tables: list[Optional[dict]] = [None] * (full + 1)
    tables[0] = {(): (0, None)}
    for mask in range(1, full + 1):
        low = mask & -mask
        out: dict = {}
        sub = mask
        while sub:
            if sub & low and load[sub] <= ctx.dscale:
                y = max(load[sub], ctx.alpha_i)
                for kind in kinds:
                    um = union[sub] | (exit_mask if kind == "passing" else 0)
                    gcost = 2 * mask_weight(um)
                    pair = (y, kind)
                    prev = tables[mask ^ sub]
                    assert prev is not None
                    for pkey, (pcost, _) in prev.items():
                        key = tuple(sorted(pkey + (pair,)))
                        cand = pcost + gcost
                        cur = out.get(key)
                        if cur is None or cand < cur[0]:
                            if cur is None:
                                ctx.bump()
                            out[key] = (cand, (sub, kind, pkey))
            sub = (sub - 1) & mask
        tables[mask] = out

    final: dict = {}
    for key, (cost, _) in tables[full].items():
        groups = []
        mask, entry = full, tables[full][key]
        k2 = key
        while mask:
            sub, kind, pkey = tables[mask][k2][1]
            terms = frozenset().union(
                *(parts[i].terminals for i in range(k) if sub >> i & 1)
            )
            groups.append((terms, max(load[sub], ctx.alpha_i), kind))
            mask ^= sub
            k2 = pkey
        final[key] = (cost, tuple(reversed(groups)))
    return final


# ---------------------------------------------------------------------------
# Phase two helpers
# ---------------------------------------------------------------------------


def _canon(pieces: tuple) -> tuple:
    """Canonical (value, count) key of a piece tuple."""
    counts: dict[int, int] = {}
    for y, _terms in pieces:
        counts[y] = counts.get(y, 0) + 1
    return tuple(sorted(counts.items()))


def _sorted_pieces(pieces) -> tuple:
    return tuple(sorted(pieces, key=_piece_key))


def _piece_key(piece: Piece) -> tuple:
    return (piece[0], tuple(sorted(piece[1])))


def _wit_key(pieces: tuple) -> tuple:
    return tuple(_piece_key(p) for p in pieces)


def _store(table: dict, pieces: tuple, cost: int, ctx: _Ctx, cfg_cap: int) -> None:
    key = _canon(pieces)
    if len(key) > cfg_cap:
        raise CapExceeded(
            f"configuration with {len(key)} distinct values exceeds cap {cfg_cap}"
        )
    cur = table.get(key)
    wit = _sorted_pieces(pieces)
    if cur is None or cost < cur[0] or (cost == cur[0] and _wit_key(wit) < _wit_key(cur[1])):
        if cur is None:
            ctx.bump()
        table[key] = (cost, wit)


def _group_pieces(pieces: tuple) -> list[tuple[int, list]]:
    by_val: dict[int, list] = {}
    for p in pieces:
        by_val.setdefault(p[0], []).append(p)
    return sorted(by_val.items())


def _match_and_merge(
    acc: tuple,
    incoming: tuple,
    cap: int,
    on_result,
) -> None:
    """Enumerate every way to merge accumulated pieces with incoming pieces
    one-to-one under the capacity, including merging none.  Calls on_result
    with the resulting piece tuple."""
    acc_groups = _group_pieces(acc)
    inc_groups = _group_pieces(incoming)
    cells = [
        (ai, bi)
        for ai, (ya, _) in enumerate(acc_groups)
        for bi, (yb, _) in enumerate(inc_groups)
        if ya + yb <= cap
    ]

    def rec(idx: int, acc_left: list[int], inc_left: list[int], merges: list):
        if idx == len(cells):
            pieces = []
            used_a: dict[int, int] = {}
            used_b: dict[int, int] = {}
            for (ai, bi), cnt in merges:
                for _ in range(cnt):
                    pa = acc_groups[ai][1][used_a.get(ai, 0)]
                    pb = inc_groups[bi][1][used_b.get(bi, 0)]
                    used_a[ai] = used_a.get(ai, 0) + 1
                    used_b[bi] = used_b.get(bi, 0) + 1
                    pieces.append((pa[0] + pb[0], pa[1] | pb[1]))
            for ai, (_, plist) in enumerate(acc_groups):
                pieces.extend(plist[used_a.get(ai, 0):])
            for bi, (_, plist) in enumerate(inc_groups):
                pieces.extend(plist[used_b.get(bi, 0):])
            on_result(tuple(pieces))
            return
        ai, bi = cells[idx]
        most = min(acc_left[ai], inc_left[bi])
        for cnt in range(most + 1):
            acc_left[ai] -= cnt
            inc_left[bi] -= cnt
            rec(idx + 1, acc_left, inc_left, merges + ([((ai, bi), cnt)] if cnt else []))
            acc_left[ai] += cnt
            inc_left[bi] += cnt

    rec(0, [len(g[1]) for g in acc_groups], [len(g[1]) for g in inc_groups], [])


def component_root_table(ci: int, ctx: _Ctx, memo: dict) -> dict:
    """Subtree table at a component root: local table combined with the table
    at the exit (when the component is internal)."""
    if ("comp", ci) in memo:
        return memo[("comp", ci)]
    view = ctx.views[ci]
    local = local_config_values(view, ctx.vs, ctx)
    comp = ctx.h.components[ci]
    if comp.exit_vertex is None:
        out: dict = {}
        for _key, (cost, partition) in sorted(local.items()):
            pieces = tuple((y, terms) for terms, y, _kind in partition)
            _store(out, pieces, cost, ctx, ctx.caps.cfg_len)
        memo[("comp", ci)] = out
        return out

    exit_table = critical_table(comp.exit_vertex, ctx, memo)
    spine_i = _scale_check(spine_weight(ctx.inst, comp), ctx.wscale, "spine weight")
    out = {}
    for _ekey, (ecost, epieces) in sorted(exit_table.items()):
        n_exit = len(epieces)
        for _lkey, (lcost, partition) in sorted(local.items()):
            passing = [(terms, y) for terms, y, kind in partition if kind == "passing"]
            ending = [(y, terms) for terms, y, kind in partition if kind == "ending"]
            n_pass = len(passing)
            if n_pass > n_exit:
                continue
            base = lcost + ecost + 2 * spine_i * (n_exit - n_pass)

            def on_result(merged, _base=base, _ending=ending, _np=n_pass):
                # every passing subtour must have absorbed an exit subtour
                if len(merged) != n_exit:
                    return
                _store(out, tuple(_ending) + merged, _base, ctx, ctx.caps.cfg_len)

            pass_pieces = tuple((y, terms) for terms, y in passing)
            _match_and_merge_all(pass_pieces, epieces, ctx.dscale, on_result)
    memo[("comp", ci)] = out
    return out


def _match_and_merge_all(must_merge: tuple, targets: tuple, cap: int, on_result) -> None:
    """Like _match_and_merge, but every piece of `must_merge` is merged."""
    acc_groups = _group_pieces(must_merge)
    inc_groups = _group_pieces(targets)

    def rec(gi: int, inc_left: list[int], chosen: list):
        if gi == len(acc_groups):
            pieces = []
            used_b: dict[int, int] = {}
            flat = []
            for (ai, bi) in chosen:
                flat.append((ai, bi))
            used_a: dict[int, int] = {}
            for ai, bi in flat:
                pa = acc_groups[ai][1][used_a.get(ai, 0)]
                pb = inc_groups[bi][1][used_b.get(bi, 0)]
                used_a[ai] = used_a.get(ai, 0) + 1
                used_b[bi] = used_b.get(bi, 0) + 1
                pieces.append((pa[0] + pb[0], pa[1] | pb[1]))
            for bi, (_, plist) in enumerate(inc_groups):
                pieces.extend(plist[used_b.get(bi, 0):])
            on_result(tuple(pieces))
            return
        ya, plist = acc_groups[gi]
        need = len(plist)

        # distribute `need` identical values over the target groups
        def dist(bi: int, left: int, picks: list):
            if left == 0:
                rec(gi + 1, inc_left, chosen + picks)
                return
            if bi == len(inc_groups):
                return
            yb = inc_groups[bi][0]
            if ya + yb > cap:
                dist(bi + 1, left, picks)
                return
            most = min(left, inc_left[bi])
            for cnt in range(most, -1, -1):
                inc_left[bi] -= cnt
                dist(bi + 1, left - cnt, picks + [(gi, bi)] * cnt)
                inc_left[bi] += cnt

        dist(0, need, [])

    rec(0, [len(g[1]) for g in inc_groups], [])


def critical_table(z: int, ctx: _Ctx, memo: dict) -> dict:
    """Subtree table at a critical vertex: left-to-right scan over the
    component subtrees attached to it, rounding to a candidate value set when
    there are too many distinct child values."""
    if ("crit", z) in memo:
        return memo[("crit", z)]
    children = ctx.rt.components_at(z)
    if not children:
        memo[("crit", z)] = {(): (0, ())}
        return memo[("crit", z)]
    child_tables = []
    for ci in children:
        tab = component_root_table(ci, ctx, memo)
        delta = _scale_check(ctx.rt.attach_weight[ci], ctx.wscale, "attach weight")
        child_tables.append((ci, tab, delta))

    union: set[int] = set()
    for _ci, tab, _d in child_tables:
        for key in tab:
            union.update(y for y, _n in key)
    k_x = 1 / ctx.params.beta
    if k_x.denominator != 1:
        raise UcvrpError("1/beta must be an integer")
    k_x = k_x.numerator
    if len(union) <= k_x:
        candidates = [tuple(sorted(union))]
    else:
        n_sets = math.comb(len(union), k_x)
        if n_sets > ctx.caps.x_budget:
            raise CapExceeded(
                f"critical vertex {z}: {n_sets} candidate value sets exceed the "
                f"enumeration budget {ctx.caps.x_budget}"
            )
        candidates = [tuple(sorted(c)) for c in combinations(sorted(union), k_x)]

    out: dict = {}
    for x_set in candidates:
        scan: dict = {(): (0, ())}
        for ci, tab, delta in child_tables:
            nxt: dict = {}
            for _key, (gcost, gpieces) in sorted(tab.items()):
                rounded = _round_pieces(gpieces, x_set)
                if rounded is None:
                    continue
                step_cost = gcost + 2 * len(gpieces) * delta
                for _skey, (scost, spieces) in sorted(scan.items()):
                    total = scost + step_cost

                    def on_result(merged, _total=total):
                        _store(nxt, merged, _total, ctx, ctx.caps.cfg_len)

                    _match_and_merge(spieces, rounded, ctx.dscale, on_result)
            scan = nxt
            if not scan:
                break
        for key, (cost, pieces) in scan.items():
            cur = out.get(key)
            if cur is None or cost < cur[0] or (
                cost == cur[0] and _wit_key(pieces) < _wit_key(cur[1])
            ):
                out[key] = (cost, pieces)
    memo[("crit", z)] = out
    return out


def _round_pieces(pieces: tuple, x_set: tuple) -> Optional[tuple]:
    out = []
    for y, terms in pieces:
        if y in x_set:
            out.append((y, terms))
            continue
        up = None
        for x in x_set:
            if x >= y:
                up = x
                break
        if up is None:
            return None
        out.append((up, terms))
    return tuple(out)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


def subtree_values_component_root(ci: int, ctx: _Ctx, memo: Optional[dict] = None) -> dict:
    return component_root_table(ci, ctx, memo if memo is not None else {})


def subtree_values_critical(z: int, ctx: _Ctx, memo: Optional[dict] = None) -> dict:
    return critical_table(z, ctx, memo if memo is not None else {})


def make_context(inst: Instance, p: Params, caps: Caps = Caps()) -> _Ctx:
    h = build_hierarchy(inst, p)
    rt = height_reduce(inst, p, h)
    vs = build_value_sets(h, p, cap=caps.y_cap)
    dscale = _lcm(
        [d.denominator for d in inst.demand.values()]
        + [p.alpha.denominator]
        + [v.denominator for v in vs.y]
    )
    wscale = _lcm(
        [w.denominator for w in inst.weight]
        + [d.denominator for d in rt.attach_weight.values()]
    )
    views = [build_component_view(h, ci) for ci in range(len(h.components))]
    y_values = frozenset(_scale_check(v, dscale, "value") for v in vs.y)
    alpha_i = _scale_check(p.alpha, dscale, "alpha")
    return _Ctx(
        inst=inst,
        params=p,
        h=h,
        rt=rt,
        vs=vs,
        views=views,
        dscale=dscale,
        wscale=wscale,
        alpha_i=alpha_i,
        y_values=y_values,
        caps=caps,
    )


def solve(
    inst: Instance,
    p: Params,
    caps: Caps = Caps(),
    with_oracle: bool = False,
    oracle_limit: int = 14,
) -> tuple[Solution, SolveStats]:
    """Full pipeline: preprocess, decompose, height-reduce, build value sets,
    run the two-phase dynamic program, and map the tours back."""
    from .baselines import exact_opt  # local import to avoid a cycle

    pre, origin = preprocess_with_origin(inst)
    if not pre.demand:
        stats = SolveStats(0, 0, 0, 0, ZERO, ZERO, ZERO)
        return Solution(()), stats

    ctx = make_context(pre, p, caps)
    memo: dict = {}
    depot_table = critical_table(pre.root, ctx, memo)
    consumed = {ci for kind, ci in memo if kind == "comp"}
    if consumed != set(range(len(ctx.h.components))):
        raise UcvrpError("dynamic program did not reach every component")
    if not depot_table:
        raise UcvrpError("no feasible configuration found (caps too tight?)")

    best_key, (best_cost, best_pieces) = min(
        depot_table.items(), key=lambda kv: (kv[1][0], kv[0])
    )
    covered: set[int] = set()
    tours = []
    for y, terms in best_pieces:
        covered |= terms
        real = sum((pre.demand[t] for t in terms), ZERO)
        dummy = Fraction(y, ctx.dscale) - real
        if dummy < 0:
            raise UcvrpError("padded demand below the real demand")
        tours.append(Tour(frozenset(terms), dummy))
    if covered != set(pre.demand):
        raise UcvrpError("best configuration does not cover every terminal")

    table_cost = Fraction(best_cost, ctx.wscale)
    pre_solution = Solution(tuple(tours))
    red, _ = reduced_instance(ctx.rt)
    reduced_cost = solution_cost(red, pre_solution)
    if reduced_cost != table_cost:
        raise UcvrpError(
            f"traceback mismatch: table {table_cost} vs re-cost {reduced_cost}"
        )
    pre_cost = solution_cost(pre, pre_solution)
    if pre_cost > table_cost:
        raise UcvrpError("mapped cost exceeds the table value")

    mapped = Solution(
        tuple(Tour(frozenset(origin[t] for t in tour.terminals), tour.dummy) for tour in tours)
    )
    final_cost = solution_cost(inst, mapped)
    if final_cost != pre_cost:
        raise UcvrpError("preprocessing changed the solution cost")

    oracle_cost = None
    if with_oracle and len(inst.demand) <= oracle_limit:
        oracle_cost = exact_opt(inst, oracle_limit).cost

    stats = SolveStats(
        n_terminals=len(inst.demand),
        n_components=len(ctx.h.components),
        y_size=len(ctx.vs.y),
        table_entries=ctx.entries,
        cost=final_cost,
        table_cost=table_cost,
        reduced_cost=reduced_cost,
        oracle_cost=oracle_cost,
    )
    return mapped, stats
