"""Ground-truth and comparison solvers.

`exact_opt` is the independent oracle used all over the test suite: a subset
dynamic program over the 2^n terminal subsets (best single-tour cost per
capacity-feasible subset, then a set-partition DP).  Demands and weights are
rescaled to integers so the inner loops stay in machine arithmetic while the
results remain exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .decompose import Params
from .instance import Instance, Solution, Tour, UcvrpError, ZERO, ONE


@dataclass(frozen=True)
class OracleResult:
    cost: Fraction
    solution: Solution
    explored: int


def _lcm_denominators(values) -> int:
    out = 1
    for v in values:
        out = out * v.denominator // math.gcd(out, v.denominator)
    return out


def exact_opt(inst: Instance, limit: int = 14) -> OracleResult:
    """Minimum-cost feasible partition of the terminals into tours."""
    terms = inst.terminals()
    k = len(terms)
    if k > limit:
        raise UcvrpError(f"exact oracle limited to {limit} terminals, got {k}")
    if k == 0:
        return OracleResult(ZERO, Solution(()), 0)

    dscale = _lcm_denominators([inst.demand[t] for t in terms])
    dem = [inst.demand[t].numerator * (dscale // inst.demand[t].denominator) for t in terms]
    cap = dscale
    wscale = _lcm_denominators([inst.weight[v] for v in inst.vertices()])
    wint = [int(inst.weight[v] * wscale) for v in inst.vertices()]

    # per-terminal root paths as edge bitmasks
    edge_index = {}
    for v in inst.vertices():
        if v != inst.root:
            edge_index[v] = len(edge_index)
    path_mask = []
    for t in terms:
        m = 0
        for e in inst.path_to_root(t):
            m |= 1 << edge_index[e]
        path_mask.append(m)

    full = (1 << k) - 1
    union = [0] * (full + 1)
    load = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        i = low.bit_length() - 1
        union[mask] = union[mask ^ low] | path_mask[i]
        load[mask] = load[mask ^ low] + dem[i]

    weight_of_union: dict[int, int] = {0: 0}
    edge_weights = [0] * len(edge_index)
    for v, idx in edge_index.items():
        edge_weights[idx] = wint[v]

    def uw(m: int) -> int:
        got = weight_of_union.get(m)
        if got is None:
            got = 0
            mm = m
            while mm:
                low = mm & -mm
                got += edge_weights[low.bit_length() - 1]
                mm ^= low
            weight_of_union[m] = got
        return got

    INF = 4 * sum(edge_weights) * (k + 1) + 1
    best1 = [INF] * (full + 1)
    for mask in range(1, full + 1):
        if load[mask] <= cap:
            best1[mask] = 2 * uw(union[mask])

    opt = [INF] * (full + 1)
    choice = [0] * (full + 1)
    opt[0] = 0
    explored = 0
    for mask in range(1, full + 1):
        low = mask & -mask
        sub = mask
        best = INF
        bestsub = 0
        while sub:
            if sub & low:
                explored += 1
                c1 = best1[sub]
                if c1 < INF:
                    cand = c1 + opt[mask ^ sub]
                    if cand < best:
                        best = cand
                        bestsub = sub
            sub = (sub - 1) & mask
        opt[mask] = best
        choice[mask] = bestsub

    if opt[full] >= INF:
        raise UcvrpError("no feasible partition (a single demand exceeds capacity?)")
    tours = []
    mask = full
    while mask:
        sub = choice[mask]
        tours.append(Tour(frozenset(terms[i] for i in range(k) if sub >> i & 1)))
        mask ^= sub
    sol = Solution(tuple(tours))
    cost = Fraction(int(opt[full]), wscale)
    return OracleResult(cost, sol, explored)


def binpacking_opt(sizes: list[Fraction]) -> int:
    """Minimum number of unit bins by exhaustive subset DP."""
    sizes = [Fraction(s) for s in sizes]
    if len(sizes) > 12:
        raise UcvrpError(f"bin packing oracle limited to 12 items, got {len(sizes)}")
    for s in sizes:
        if not (ZERO < s <= ONE):
            raise UcvrpError(f"size outside (0,1]: {s}")
    k = len(sizes)
    if k == 0:
        return 0
    scale = _lcm_denominators(sizes)
    items = [s.numerator * (scale // s.denominator) for s in sizes]
    full = (1 << k) - 1
    load = [0] * (full + 1)
    for mask in range(1, full + 1):
        low = mask & -mask
        load[mask] = load[mask ^ low] + items[low.bit_length() - 1]
    INF = k + 1
    bins = [INF] * (full + 1)
    bins[0] = 0
    for mask in range(1, full + 1):
        low = mask & -mask
        sub = mask
        while sub:
            if sub & low and load[sub] <= scale:
                cand = 1 + bins[mask ^ sub]
                if cand < bins[mask]:
                    bins[mask] = cand
            sub = (sub - 1) & mask
    return bins[full]


def _dfs_terminal_order(inst: Instance) -> list[int]:
    order = []
    stack = [inst.root]
    while stack:
        v = stack.pop()
        if v in inst.demand:
            order.append(v)
        stack.extend(reversed(inst.children(v)))
    return order


def itp_heuristic(inst: Instance, p: Params, mode: str = "nextfit") -> Solution:
    """Partition the DFS order of the terminals into consecutive segments.

    nextfit greedily accumulates while the segment fits the capacity; the
    low-demand variant closes a segment as soon as its demand reaches
    1 - alpha, which requires every demand to be at most alpha.
    """
    if mode not in ("nextfit", "lowdemand"):
        raise UcvrpError(f"unknown itp mode {mode!r}")
    order = _dfs_terminal_order(inst)
    if mode == "lowdemand":
        too_big = [t for t in order if inst.demand[t] > p.alpha]
        if too_big:
            raise UcvrpError(
                f"low-demand itp requires every demand <= alpha; terminal {too_big[0]} violates"
            )
    tours = []
    seg: list[int] = []
    seg_load = ZERO
    for t in order:
        d = inst.demand[t]
        if mode == "nextfit":
            if seg and seg_load + d > ONE:
                tours.append(Tour(frozenset(seg)))
                seg, seg_load = [], ZERO
            seg.append(t)
            seg_load += d
        else:
            seg.append(t)
            seg_load += d
            if seg_load >= ONE - p.alpha:
                tours.append(Tour(frozenset(seg)))
                seg, seg_load = [], ZERO
    if seg:
        tours.append(Tour(frozenset(seg)))
    return Solution(tuple(tours))
