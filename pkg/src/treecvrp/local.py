"""Simplifying a set of subtours inside one component.

A subtour is an edge multiset (every traversed edge appears once per
direction, so multiplicities are even) plus the set of terminals whose demand
it covers.  The transformer rearranges a feasible set of subtours so that in
every cell a single subtour covers all small terminals, at a bounded extra
cost: ending excursions are merged per cluster, the surviving ending
excursion of each passing cluster is extended by the spine of its deepest
touched cell, passing excursions are merged per cell (spines stay with their
donors), overweight subtours shed whole cells, and the shed pieces are
reconnected through edges that at least two subtours already use.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .assignment import BipartiteWeights, assign
from .decompose import Hierarchy, Params, Region
from .instance import Instance, UcvrpError, ZERO


@dataclass
class Subtour:
    """Closed walk at the component root: even edge multiplicities, connected
    support, plus the covered terminals."""

    edges: Counter
    terminals: set[int]
    kind: str = "ending"  # passing | ending
    dummy: Fraction = ZERO

    def copy(self) -> "Subtour":
        return Subtour(Counter(self.edges), set(self.terminals), self.kind, self.dummy)


@dataclass(frozen=True)
class Fragment:
    """A removed piece: edges with multiplicity and the terminals they served."""

    edges: tuple[tuple[int, int], ...]  # (edge, multiplicity)
    terminals: frozenset[int]

    def counter(self) -> Counter:
        return Counter(dict(self.edges))


@dataclass
class LocalDiagnostics:
    threshold_cells: dict[str, str]
    removed_pieces: list[Fragment]
    nice_edges: frozenset[int]
    extra_cost_step2: Fraction
    extra_cost_step5: Fraction
    # demand of every subtour after each stage, aligned with the input list
    step_demands: list[tuple[Fraction, Fraction, Fraction, Fraction, Fraction]] = field(
        default_factory=list
    )


@dataclass
class ComponentView:
    """One component of the hierarchy with the lookups the transformer needs."""

    inst: Instance
    params: Params
    ci: int
    comp: Region
    bigs: frozenset[int]
    clusters: list[Region]
    cells: list[list[Region]]  # per cluster, ordered along the spine
    spine_edges: list[frozenset[int]]  # per cluster
    cell_spine_edges: list[list[frozenset[int]]]
    vertex_cell: list[dict[int, int]]  # per cluster: vertex -> cell index
    terminal_cell: dict[int, tuple[int, int]]  # small terminal -> (cluster, cell)
    comp_spine_edges: frozenset[int]

    @property
    def root(self) -> int:
        return self.comp.root_vertex

    @property
    def exit(self) -> Optional[int]:
        return self.comp.exit_vertex

    def terminals(self) -> tuple[int, ...]:
        return tuple(sorted(v for v in self.comp.vertices if v in self.inst.demand))

    def cell_smalls(self, xi: int, si: int) -> frozenset[int]:
        cell = self.cells[xi][si]
        return frozenset(
            v
            for v in cell.vertices
            if v in self.inst.demand
            and v not in (cell.root_vertex, cell.exit_vertex)
            and v not in self.bigs
        )


def build_component_view(h: Hierarchy, ci: int) -> ComponentView:
    inst = h.inst
    comp = h.components[ci]
    clusters: list[Region] = []
    cells: list[list[Region]] = []
    for key, cluster in h.component_clusters(ci):
        clusters.append(cluster)
        cells.append(list(h.cells_of[key]))
    spine_edges = []
    cell_spine_edges = []
    vertex_cell = []
    terminal_cell: dict[int, tuple[int, int]] = {}
    bigs = h.big_terminals_of[ci]
    for xi, cluster in enumerate(clusters):
        spine_edges.append(
            frozenset(cluster.spine[1:]) if cluster.spine is not None else frozenset()
        )
        per_cell = []
        vmap: dict[int, int] = {}
        for si, cell in enumerate(cells[xi]):
            per_cell.append(
                frozenset(cell.spine[1:]) if cell.spine is not None else frozenset()
            )
            for v in cell.vertices:
                vmap[v] = si
            for t in cell.vertices:
                if (
                    t in inst.demand
                    and t not in (cell.root_vertex, cell.exit_vertex)
                    and t not in bigs
                ):
                    terminal_cell[t] = (xi, si)
        cell_spine_edges.append(per_cell)
        vertex_cell.append(vmap)
    comp_spine = (
        frozenset(comp.spine[1:]) if comp.spine is not None else frozenset()
    )
    return ComponentView(
        inst=inst,
        params=h.params,
        ci=ci,
        comp=comp,
        bigs=bigs,
        clusters=clusters,
        cells=cells,
        spine_edges=spine_edges,
        cell_spine_edges=cell_spine_edges,
        vertex_cell=vertex_cell,
        terminal_cell=terminal_cell,
        comp_spine_edges=comp_spine,
    )


def component_views(h: Hierarchy) -> list[ComponentView]:
    return [build_component_view(h, ci) for ci in range(len(h.components))]


# ---------------------------------------------------------------------------
# Subtour helpers
# ---------------------------------------------------------------------------


def subtour_cost(inst: Instance, t: Subtour) -> Fraction:
    return sum((mult * inst.weight[e] for e, mult in t.edges.items()), ZERO)


def subtour_demand(inst: Instance, t: Subtour) -> Fraction:
    return sum((inst.demand[v] for v in t.terminals), ZERO) + t.dummy


def subtour_vertices(view: ComponentView, t: Subtour) -> set[int]:
    verts = {view.root}
    for e in t.edges:
        verts.add(e)
        verts.add(view.inst.parent[e])
    return verts


def make_subtour(view: ComponentView, terminals, passing: bool = False) -> Subtour:
    """Doubled minimal subtree from the component root spanning `terminals`
    (plus the exit when passing)."""
    inst = view.inst
    targets = set(terminals)
    if passing:
        if view.exit is None:
            raise UcvrpError("ending component has no exit to pass through")
        targets.add(view.exit)
    edges: Counter = Counter()
    seen: set[int] = set()
    for t in targets:
        v = t
        while v != view.root and v not in seen:
            seen.add(v)
            edges[v] = 2
            v = inst.parent[v]
    kind = "passing" if passing else "ending"
    return Subtour(edges, set(terminals), kind)


def refresh_kind(view: ComponentView, t: Subtour) -> None:
    """A subtour passes the component iff it holds the full root-exit path."""
    t.kind = (
        "passing"
        if view.exit is not None
        and view.comp_spine_edges
        and all(t.edges.get(e, 0) >= 2 for e in view.comp_spine_edges)
        else "ending"
    )


def validate_subtours(view: ComponentView, subtours: list[Subtour]) -> None:
    inst = view.inst
    covered: set[int] = set()
    for t in subtours:
        for e, mult in t.edges.items():
            if e not in view.comp.edges:
                raise UcvrpError(f"subtour uses edge {e} outside the component")
            if mult <= 0 or mult % 2 != 0:
                raise UcvrpError(f"edge {e} has odd multiplicity {mult}")
        for v in t.terminals:
            if v not in inst.demand or v not in view.comp.vertices:
                raise UcvrpError(f"subtour covers non-terminal {v}")
            if v in covered:
                raise UcvrpError(f"terminal {v} covered twice")
            covered.add(v)
            if t.edges.get(v, 0) < 2:
                raise UcvrpError(f"subtour covers terminal {v} without visiting it")
        if t.edges and not _connected_at_root(view, t):
            raise UcvrpError("subtour support is not connected at the component root")
    missing = set(view.terminals()) - covered
    if missing:
        raise UcvrpError(f"terminals not covered: {sorted(missing)}")


def _connected_at_root(view: ComponentView, t: Subtour) -> bool:
    for e in t.edges:
        v = e
        while v != view.root:
            if t.edges.get(v, 0) < 2:
                return False
            v = view.inst.parent[v]
    return True


# ---------------------------------------------------------------------------
# Restrictions
# ---------------------------------------------------------------------------


def _restriction(t: Subtour, edges: frozenset[int]) -> Counter:
    return Counter({e: m for e, m in t.edges.items() if e in edges})


def _passing_in(t: Subtour, spine: frozenset[int], exit_vertex: Optional[int]) -> bool:
    if exit_vertex is None:
        return False
    if not spine:
        return False
    return all(t.edges.get(e, 0) >= 2 for e in spine)


def threshold_cell(view: ComponentView, xi: int, part_edges: Counter) -> int:
    """Index of the deepest cell of cluster `xi` touched by an ending part."""
    vmap = view.vertex_cell[xi]
    verts = {view.clusters[xi].root_vertex}
    for e in part_edges:
        verts.add(e)
        verts.add(view.inst.parent[e])
    touched = [vmap[v] for v in verts if v in vmap]
    if not touched:
        raise UcvrpError("subtour has no vertex in the cluster")
    return max(touched)


def nice_edges(view: ComponentView, subtours: list[Subtour]) -> frozenset[int]:
    """Edges used by at least two distinct subtours."""
    count: Counter = Counter()
    for t in subtours:
        for e in t.edges:
            count[e] += 1
    return frozenset(e for e, c in count.items() if c >= 2)


def reconnect_removed(
    view: ComponentView, pieces: list[Fragment], nice: frozenset[int]
) -> Subtour:
    """Connect all removed pieces into a single subtour at the component root,
    doubling each needed nice edge at most once.  Raises when a piece cannot
    reach the root through nice edges (a pipeline invariant violation)."""
    inst = view.inst
    edges: Counter = Counter()
    terminals: set[int] = set()
    needed: set[int] = set()
    for piece in pieces:
        counter = piece.counter()
        edges.update(counter)
        terminals |= piece.terminals
        for top in _chunk_tops(view, counter):
            v = top
            while v != view.root:
                if counter.get(v, 0) >= 2:
                    v = inst.parent[v]
                    continue
                if v not in nice:
                    raise UcvrpError(
                        f"removed piece not connected to the component root through "
                        f"edges shared by two subtours (edge {v})"
                    )
                needed.add(v)
                v = inst.parent[v]
    for e in needed:
        if edges.get(e, 0) < 2:
            edges[e] += 2
    bar = Subtour(edges, terminals)
    if bar.edges:
        refresh_kind(view, bar)
    return bar


def _chunk_tops(view: ComponentView, counter: Counter) -> list[int]:
    """Topmost vertex of every connected chunk of an edge multiset."""
    inst = view.inst
    tops = []
    edge_set = set(counter)
    for e in sorted(edge_set):
        if inst.parent[e] == view.root or inst.parent[e] not in edge_set:
            tops.append(inst.parent[e])
    return sorted(set(tops))


# ---------------------------------------------------------------------------
# The transformer
# ---------------------------------------------------------------------------


def local_simplify(
    view: ComponentView,
    s_c: list[Subtour],
    p: Params,
    max_subtours: Optional[int] = None,
) -> tuple[list[Subtour], Subtour, LocalDiagnostics]:
    """Rearrange `s_c` so each cell's small terminals sit on a single subtour.

    Returns the transformed subtours (aligned with the input; entries may end
    up empty), the reconnection subtour for the removed pieces, and the
    diagnostics needed to assert every cost and demand bound.
    """
    inst = view.inst
    bound = max_subtours
    if bound is None:
        bound = int(2 * p.gamma / p.alpha) + 1
    if len(s_c) > bound:
        raise UcvrpError(f"too many subtours: {len(s_c)} > {bound}")
    validate_subtours(view, s_c)

    work = [t.copy() for t in s_c]
    d0 = [subtour_demand(inst, t) for t in s_c]

    # --- step 1: merge the ending excursions of each cluster onto one subtour
    ending_parts: dict[int, list[int]] = {}
    for xi, cluster in enumerate(view.clusters):
        if not cluster.edges:
            continue
        for ai, t in enumerate(work):
            restr = _restriction(t, cluster.edges)
            if restr and not _passing_in(t, view.spine_edges[xi], cluster.exit_vertex):
                ending_parts.setdefault(xi, []).append(ai)
    if ending_parts:
        a_side = tuple(sorted({ai for ais in ending_parts.values() for ai in ais}))
        b_side = tuple(sorted(ending_parts))
        edge_weight = {}
        b_weight = {}
        for xi in b_side:
            total = ZERO
            for ai in ending_parts[xi]:
                w = _interior_demand(view, work[ai], xi)
                edge_weight[(ai, xi)] = w
                total += w
            b_weight[xi] = total
        f = assign(BipartiteWeights(a_side, b_side, edge_weight, b_weight))
        for xi in b_side:
            target = f[xi]
            for ai in ending_parts[xi]:
                if ai == target:
                    continue
                _move_edges(work[ai], work[target], view.clusters[xi].edges)
                _move_terminals(view, work[ai], work[target], xi)
    d1 = [subtour_demand(inst, t) for t in work]

    # --- step 2: extend each surviving ending excursion by the spine subtour
    # of the deepest cell it touches
    w2 = ZERO
    thresholds: dict[str, str] = {}
    for xi, cluster in enumerate(view.clusters):
        if cluster.exit_vertex is None or not cluster.edges:
            continue
        holders = [
            ai
            for ai, t in enumerate(work)
            if _restriction(t, cluster.edges)
            and not _passing_in(t, view.spine_edges[xi], cluster.exit_vertex)
        ]
        if not holders:
            continue
        if len(holders) > 1:
            raise UcvrpError(f"cluster {cluster.rid}: several ending excursions survive")
        ai = holders[0]
        part = _restriction(work[ai], cluster.edges)
        si = threshold_cell(view, xi, part)
        thresholds[cluster.rid] = view.cells[xi][si].rid
        for e in view.cell_spine_edges[xi][si]:
            have = work[ai].edges.get(e, 0)
            if have < 2:
                work[ai].edges[e] = 2
                w2 += (2 - have) * inst.weight[e]
    d2 = [subtour_demand(inst, t) for t in work]

    a2_snapshot = [t.copy() for t in work]
    nice = nice_edges(view, a2_snapshot)

    # --- step 3: merge the non-spine passing excursions of each passing cell
    cell_parts: dict[tuple[int, int], list[int]] = {}
    for xi, cluster in enumerate(view.clusters):
        if cluster.exit_vertex is None:
            continue
        for si, cell in enumerate(view.cells[xi]):
            if not cell.edges:
                continue
            spine = view.cell_spine_edges[xi][si]
            for ai, t in enumerate(work):
                restr = _restriction(t, cell.edges)
                if not restr:
                    continue
                if not all(t.edges.get(e, 0) >= 2 for e in spine):
                    raise UcvrpError(
                        f"cell {cell.rid}: excursion is not passing after extension"
                    )
                extra = +Counter(restr)
                for e in spine:
                    extra[e] -= 2
                extra = +extra
                if extra:
                    cell_parts.setdefault((xi, si), []).append(ai)
    if cell_parts:
        a_side = tuple(sorted({ai for ais in cell_parts.values() for ai in ais}))
        b_side = tuple(sorted(cell_parts))
        edge_weight = {}
        b_weight = {}
        for key in b_side:
            xi, si = key
            smalls = view.cell_smalls(xi, si)
            total = ZERO
            for ai in cell_parts[key]:
                w = sum((inst.demand[v] for v in work[ai].terminals & smalls), ZERO)
                edge_weight[(ai, key)] = w
                total += w
            b_weight[key] = total
        f = assign(BipartiteWeights(a_side, b_side, edge_weight, b_weight))
        for key in b_side:
            xi, si = key
            target = f[key]
            cell = view.cells[xi][si]
            spine = view.cell_spine_edges[xi][si]
            smalls = view.cell_smalls(xi, si)
            for ai in cell_parts[key]:
                if ai == target:
                    continue
                _move_cell_branches(work[ai], work[target], cell.edges, spine)
                moved = work[ai].terminals & smalls
                work[ai].terminals -= moved
                work[target].terminals |= moved
    d3 = [subtour_demand(inst, t) for t in work]

    # --- step 4: shed whole cells until every subtour is back to its input demand
    removed: list[Fragment] = []
    for ai, t in enumerate(work):
        while subtour_demand(inst, t) > d0[ai]:
            extras = t.terminals - s_c[ai].terminals
            if not extras:
                raise UcvrpError("overweight subtour has no removable terminal")
            v = max(
                extras,
                key=lambda u: (
                    inst.dist_root(view.cells[view.terminal_cell[u][0]][view.terminal_cell[u][1]].root_vertex),
                    -u,
                ),
            )
            xi, si = view.terminal_cell[v]
            cluster = view.clusters[xi]
            cell = view.cells[xi][si]
            if cluster.exit_vertex is None:
                chopped = _restriction(t, cluster.edges)
                dropped_terms = {
                    u for u in t.terminals if u in cluster.vertices and u != cluster.root_vertex
                }
                for e in chopped:
                    del t.edges[e]
            else:
                spine = view.cell_spine_edges[xi][si]
                chopped = _restriction(t, cell.edges)
                for e in spine:
                    chopped[e] -= 2
                chopped = +chopped
                smalls = view.cell_smalls(xi, si)
                dropped_terms = t.terminals & smalls
                for e, mult in chopped.items():
                    t.edges[e] -= mult
                    if t.edges[e] <= 0:
                        del t.edges[e]
            t.terminals -= dropped_terms
            removed.append(
                Fragment(tuple(sorted(chopped.items())), frozenset(dropped_terms))
            )
    d4 = [subtour_demand(inst, t) for t in work]

    # --- step 5: reconnect the removed pieces through nice edges
    bar = reconnect_removed(view, removed, nice)
    piece_cost = sum(
        (sum((m * inst.weight[e] for e, m in piece.edges), ZERO) for piece in removed),
        ZERO,
    )
    w5 = subtour_cost(inst, bar) - piece_cost

    for t in work:
        refresh_kind(view, t)
    diag = LocalDiagnostics(
        threshold_cells=thresholds,
        removed_pieces=removed,
        nice_edges=nice,
        extra_cost_step2=w2,
        extra_cost_step5=w5,
        step_demands=list(zip(d0, d1, d2, d3, d4)),
    )
    return work, bar, diag


def _interior_demand(view: ComponentView, t: Subtour, xi: int) -> Fraction:
    cluster = view.clusters[xi]
    inside = {
        v
        for v in t.terminals
        if v in cluster.vertices and v not in (cluster.root_vertex, cluster.exit_vertex)
    }
    return sum((view.inst.demand[v] for v in inside), ZERO)


def _move_edges(src: Subtour, dst: Subtour, edges: frozenset[int]) -> None:
    for e in list(src.edges):
        if e in edges:
            dst.edges[e] += src.edges[e]
            del src.edges[e]


def _move_terminals(view: ComponentView, src: Subtour, dst: Subtour, xi: int) -> None:
    cluster = view.clusters[xi]
    moved = {
        v
        for v in src.terminals
        if v in cluster.vertices and v not in (cluster.root_vertex, cluster.exit_vertex)
    }
    src.terminals -= moved
    dst.terminals |= moved


def _move_cell_branches(
    src: Subtour, dst: Subtour, cell_edges: frozenset[int], spine: frozenset[int]
) -> None:
    moved = _restriction(src, cell_edges)
    for e in spine:
        moved[e] -= 2
    moved = +moved
    for e, mult in moved.items():
        src.edges[e] -= mult
        if src.edges[e] <= 0:
            del src.edges[e]
        dst.edges[e] += mult
