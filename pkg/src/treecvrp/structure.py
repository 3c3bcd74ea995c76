"""Height reduction, demand value sets, and adaptive rounding.

Height reduction re-hangs every component from the critical vertex of its
distance band, giving a tree whose component levels are bounded while every
component itself is untouched; solutions map back to the original tree
without a cost increase.  The value sets Y_c / Y collect the demand values a
structured solution can use; they are materialized exactly, with a hard cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .decompose import Hierarchy, Params, build_hierarchy
from .instance import (
    CapExceeded,
    Instance,
    Solution,
    UcvrpError,
    ZERO,
    ONE,
    check_feasible,
)


@dataclass
class ReducedTree:
    base: Instance
    hierarchy: Hierarchy
    band_of: dict[int, int]  # component index -> band in [1, h_eps]
    critical_of: dict[int, int]  # component index -> critical vertex
    attach_weight: dict[int, Fraction]  # component index -> re-attachment weight
    critical_vertices: frozenset[int]
    # critical vertex -> component index owning it as exit (None at the depot)
    host_component: dict[int, Optional[int]]

    def components_at(self, z: int) -> list[int]:
        return sorted(ci for ci, v in self.critical_of.items() if v == z)


def height_reduce(inst: Instance, p: Params, h: Optional[Hierarchy] = None) -> ReducedTree:
    """Assign bands and re-attach every component to its critical vertex."""
    if h is None:
        h = build_hierarchy(inst, p)
    if not inst.demand:
        raise UcvrpError("instance has no terminals")
    d_min = min(inst.dist_root(t) for t in inst.demand)
    if d_min == 0:
        raise UcvrpError("terminal at the depot: minimum depot distance undefined")
    d_band = p.alpha * p.eps * d_min

    band_of: dict[int, int] = {}
    for ci, comp in enumerate(h.components):
        d = inst.dist_root(comp.root_vertex)
        band_of[ci] = int(d / d_band) + 1

    # group components of one band that share vertices; the critical vertex is
    # the root of the shallowest component of the group
    owner: dict[int, int] = {}
    for ci in range(len(h.components)):
        owner[ci] = ci

    def find(ci: int) -> int:
        while owner[ci] != ci:
            owner[ci] = owner[owner[ci]]
            ci = owner[ci]
        return ci

    by_band: dict[int, list[int]] = {}
    for ci, band in band_of.items():
        by_band.setdefault(band, []).append(ci)
    for band, members in by_band.items():
        seen_vertex: dict[int, int] = {}
        for ci in sorted(members):
            for v in sorted(h.components[ci].vertices):
                if v in seen_vertex:
                    a, b = find(seen_vertex[v]), find(ci)
                    if a != b:
                        owner[a] = b
                else:
                    seen_vertex[v] = ci

    critical_of: dict[int, int] = {}
    attach: dict[int, Fraction] = {}
    groups: dict[int, list[int]] = {}
    for ci in range(len(h.components)):
        groups.setdefault(find(ci), []).append(ci)
    edge_component = {e: ci for ci, comp in enumerate(h.components) for e in comp.edges}
    host: dict[int, Optional[int]] = {}
    for members in groups.values():
        z_ci = min(members, key=lambda ci: (inst.dist_root(h.components[ci].root_vertex), h.components[ci].root_vertex))
        z = h.components[z_ci].root_vertex
        for ci in members:
            r_c = h.components[ci].root_vertex
            delta = inst.dist_root(r_c) - inst.dist_root(z)
            if delta < 0 or (delta >= 0 and z not in inst.path_to_root(r_c) + [inst.root] and z != r_c):
                raise UcvrpError("critical vertex is not an ancestor of the component root")
            critical_of[ci] = z
            attach[ci] = delta
        if z == inst.root:
            host[z] = None
        else:
            q = edge_component[z]
            if h.components[q].exit_vertex != z:
                raise UcvrpError("critical vertex is not the exit of its host component")
            host[z] = q
    return ReducedTree(
        base=inst,
        hierarchy=h,
        band_of=band_of,
        critical_of=critical_of,
        attach_weight=attach,
        critical_vertices=frozenset(host),
        host_component=host,
    )


def reduced_instance(rt: ReducedTree) -> tuple[Instance, dict[int, int]]:
    """Materialize the height-reduced tree as a plain instance.

    Every component gets a private copy of its root vertex, attached to the
    component's critical vertex by an edge carrying the original distance.
    Returns the instance and a map from copy vertices to original roots.
    """
    inst = rt.base
    h = rt.hierarchy
    n = inst.n
    parent: dict[int, Optional[int]] = {inst.root: None}
    weight: dict[int, Fraction] = {inst.root: ZERO}
    copy_of: dict[int, int] = {}
    fresh = n
    for ci, comp in enumerate(h.components):
        copy = fresh
        fresh += 1
        copy_of[ci] = copy
        parent[copy] = rt.critical_of[ci]
        weight[copy] = rt.attach_weight[ci]
        for c in comp.edges:
            pv = inst.parent[c]
            parent[c] = copy if pv == comp.root_vertex else pv
            weight[c] = inst.weight[c]
    order = sorted(parent)
    newid = {old: i for i, old in enumerate(order)}
    par = tuple(None if parent[v] is None else newid[parent[v]] for v in order)
    wt = tuple(weight[v] for v in order)
    demand = {newid[t]: d for t, d in inst.demand.items()}
    origin = {newid[copy_of[ci]]: h.components[ci].root_vertex for ci in copy_of}
    out = Instance(par, wt, newid[inst.root], demand)
    # terminals keep their ids under the dense reindex only if untouched
    remap = {t: newid[t] for t in inst.demand}
    if any(k != v for k, v in remap.items()):
        # keep reporting stable: renumbering terminals would break map-back
        raise UcvrpError("terminal ids changed during height reduction")
    return out, origin


def map_back(rt: ReducedTree, sol: Solution) -> Solution:
    """A feasible solution on the reduced tree is feasible on the original
    tree with the same terminal coverage; the cost never increases because
    every re-attachment edge is as long as the tree path it replaces."""
    red, _ = reduced_instance(rt)
    report = check_feasible(red, sol)
    if not report.ok:
        raise UcvrpError("infeasible solution: " + "; ".join(report.messages()))
    return Solution(sol.tours)


# ---------------------------------------------------------------------------
# Value sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Part:
    """A unit of the per-component terminal partition: either the small
    terminals of one cell, or a single big terminal."""

    terminals: frozenset[int]
    demand: Fraction
    big: bool


@dataclass
class ValueSets:
    q_c: dict[int, tuple[Part, ...]]
    y_c: dict[int, tuple[Fraction, ...]]
    y: tuple[Fraction, ...]

    def y_set(self) -> frozenset[Fraction]:
        return frozenset(self.y)


def component_parts(h: Hierarchy, ci: int) -> tuple[Part, ...]:
    inst, p = h.inst, h.params
    bigs = h.big_terminals_of[ci]
    parts: list[Part] = []
    for (key, cluster) in h.component_clusters(ci):
        for cell in h.cells_of[key]:
            smalls = frozenset(
                v
                for v in cell.vertices
                if v in inst.demand
                and v not in (cell.root_vertex, cell.exit_vertex)
                and v not in bigs
            )
            if smalls:
                demand = sum((inst.demand[v] for v in smalls), ZERO)
                parts.append(Part(smalls, demand, big=False))
    for t in sorted(bigs):
        parts.append(Part(frozenset({t}), inst.demand[t], big=True))
    covered = set()
    for part in parts:
        covered |= part.terminals
    expected = set(h.component_terminals(ci))
    if covered != expected:
        raise UcvrpError(f"component {ci}: parts do not partition its terminals")
    return tuple(parts)


def build_value_sets(h: Hierarchy, p: Params, cap: int = 200_000) -> ValueSets:
    """Per-component subset-sum value sets and their global capped closure."""
    q_c: dict[int, tuple[Part, ...]] = {}
    y_c: dict[int, tuple[Fraction, ...]] = {}
    for ci in range(len(h.components)):
        parts = component_parts(h, ci)
        q_c[ci] = parts
        sums = {ZERO}
        for part in parts:
            additions = set()
            for s in sums:
                t = s + part.demand
                if t <= ONE:
                    additions.add(t)
            sums |= additions
            if len(sums) > cap:
                raise CapExceeded(f"component {ci}: subset-sum set exceeds cap {cap}")
        vals = {p.alpha} | {s for s in sums if p.alpha < s <= ONE}
        y_c[ci] = tuple(sorted(vals))

    base = sorted(set().union(*y_c.values())) if y_c else []
    closed: set[Fraction] = {ZERO}
    frontier = {ZERO}
    while frontier:
        fresh: set[Fraction] = set()
        for s in frontier:
            for v in base:
                t = s + v
                if t <= ONE and t not in closed:
                    fresh.add(t)
        closed |= fresh
        if len(closed) > cap:
            raise CapExceeded(f"value set exceeds cap {cap}")
        frontier = fresh
    y = tuple(sorted(v for v in closed if p.alpha <= v <= ONE))
    return ValueSets(q_c=q_c, y_c=y_c, y=y)


# ---------------------------------------------------------------------------
# Adaptive rounding
# ---------------------------------------------------------------------------


def adaptive_round(
    demands: list[Fraction], beta: Fraction
) -> tuple[list[Fraction], list[Fraction]]:
    """Round a demand multiset to at most 1/beta distinct values.

    Sorted ascending and padded with zeros in front, the demands are split
    into 1/beta equal-cardinality groups, each rounded to its maximum.  The
    last group is discarded; each earlier group's rounded values stand in for
    the next group's originals, which dominate them entrywise.  Returns
    (rounded stand-ins, discarded originals); the identity when there are at
    most 1/beta demands.
    """
    if not demands:
        raise UcvrpError("empty demand multiset")
    inv = 1 / Fraction(beta)
    if inv.denominator != 1 or inv <= 0:
        raise UcvrpError("1/beta must be a positive integer")
    k = inv.numerator
    values = sorted(Fraction(d) for d in demands)
    m = len(values)
    if m <= k:
        return values, []
    size = -(-m // k)
    padded = [ZERO] * (k * size - m) + values
    groups = [padded[i * size : (i + 1) * size] for i in range(k)]
    rounded: list[Fraction] = []
    for g in groups[:-1]:
        rounded.extend([max(g)] * size)
    return rounded, list(groups[-1])
