"""Four-level edge partition of a preprocessed tree.

The tree is cut into components, each component into blocks, each block into
clusters, and each passing cluster into cells.  Components and clusters come
from the same demand-peeling construction (with thresholds gamma and
gamma_prime respectively); blocks split at big terminals and branching
vertices of their Steiner tree; cells slice a cluster spine into near-equal
pieces.  Every region records its root, optional exit, and spine so that the
stated demand/count bounds can be asserted post-hoc.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .instance import Instance, UcvrpError, ZERO, format_rational


@dataclass(frozen=True)
class Params:
    """Pipeline parameters derived from eps, each individually overridable.

    With no overrides: gamma = 12/eps, alpha = eps^(1/eps + 1),
    gamma_prime = eps*alpha/gamma, beta = (1/4)*eps^(4/eps + 1),
    h_eps = (1/eps)^(2/eps + 1).
    """

    eps: Fraction
    gamma: Fraction
    alpha: Fraction
    gamma_prime: Fraction
    beta: Fraction
    h_eps: int
    overrides: dict = field(default_factory=dict, compare=False)

    @staticmethod
    def from_eps(eps: Fraction, **overrides) -> "Params":
        eps = Fraction(eps)
        inv = 1 / eps
        if inv.denominator != 1 or not (0 < eps < 1):
            raise UcvrpError("eps must be the reciprocal of an integer >= 2")
        k = inv.numerator
        gamma = Fraction(12) / eps
        alpha = eps ** (k + 1)
        gamma_prime = eps * alpha / gamma
        beta = Fraction(1, 4) * eps ** (4 * k + 1)
        h_eps = k ** (2 * k + 1)
        values = dict(
            gamma=gamma, alpha=alpha, gamma_prime=gamma_prime, beta=beta, h_eps=h_eps
        )
        for name, val in overrides.items():
            if name not in values:
                raise UcvrpError(f"unknown parameter override {name!r}")
            values[name] = int(val) if name == "h_eps" else Fraction(val)
        p = Params(eps=eps, overrides=dict(overrides), **values)
        if not (p.gamma > 0 and p.alpha > 0 and p.gamma_prime > 0 and p.beta > 0):
            raise UcvrpError("parameters must be positive")
        return p

    @property
    def inv_eps(self) -> int:
        return (1 / self.eps).numerator


@dataclass(frozen=True)
class Region:
    """A connected piece of the tree at one decomposition level.

    Edges are identified by their child vertex.  `spine` is the root-to-exit
    vertex path and is present exactly for passing regions.  Cells carry their
    vertex set explicitly because cells partition vertices, not edges.
    """

    kind: str  # component | block | cluster | cell
    rid: str
    edges: frozenset[int]
    vertices: frozenset[int]
    root_vertex: int
    exit_vertex: Optional[int] = None
    spine: Optional[tuple[int, ...]] = None
    tag: str = ""

    @property
    def passing(self) -> bool:
        return self.exit_vertex is not None


def region_demand(inst: Instance, region: Region) -> Fraction:
    """Total demand of terminals strictly inside the region."""
    skip = {region.root_vertex, region.exit_vertex}
    return sum(
        (inst.demand[v] for v in region.vertices if v in inst.demand and v not in skip),
        ZERO,
    )


def spine_weight(inst: Instance, region: Region) -> Fraction:
    if region.spine is None:
        return ZERO
    return sum((inst.weight[v] for v in region.spine[1:]), ZERO)


def _edge_vertices(inst: Instance, edges: frozenset[int], root: int) -> frozenset[int]:
    verts = {root}
    for c in edges:
        verts.add(c)
        p = inst.parent[c]
        if p is not None:
            verts.add(p)
    return frozenset(verts)


def _tree_path(inst: Instance, top: int, bottom: int) -> list[int]:
    """Vertex path top..bottom; top must be an ancestor of bottom."""
    path = [bottom]
    v = bottom
    while v != top:
        p = inst.parent[v]
        if p is None:
            raise UcvrpError(f"{top} is not an ancestor of {bottom}")
        v = p
        path.append(v)
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# Demand peeling: shared construction for components and clusters
# ---------------------------------------------------------------------------


def _peel(
    inst: Instance,
    edges: frozenset[int],
    root: int,
    exit_v: Optional[int],
    thr: Fraction,
    kind: str,
) -> list[Region]:
    """Partition `edges` into regions of demand at most 2*thr.

    Deepest subtrees reaching demand `thr` become leaf regions; the remainder
    is peeled bottom-up along the paths between key vertices, each peeled
    region reaching demand `thr` except the upmost one per path.  Light
    subtrees dangling at the root (no key vertex inside) are merged into the
    upmost region at the root, or form a single ending region when the whole
    area is below the threshold.
    """
    if not edges:
        return []
    verts = _edge_vertices(inst, edges, root)
    kids: dict[int, list[int]] = {v: [] for v in verts}
    for c in edges:
        kids[inst.parent[c]].append(c)
    for v in kids:
        kids[v].sort()
    boundary = {root, exit_v}

    # subtree demand within the region, terminals on the boundary excluded
    sub: dict[int, Fraction] = {}
    order = [root]
    i = 0
    while i < len(order):
        order.extend(kids[order[i]])
        i += 1
    for v in reversed(order):
        d = inst.demand.get(v, ZERO) if v not in boundary else ZERO
        for c in kids[v]:
            d += sub[c]
        sub[v] = d

    # deepest capture: a non-leaf vertex roots a leaf region iff its subtree
    # demand reaches the threshold and nothing below it was already captured;
    # this keeps every uncaptured hanging subtree at demand <= thr (leaves may
    # carry exactly thr), which the peeled regions' 2*thr bound relies on
    leafroots: list[int] = []
    marked: set[int] = set()
    has_marked_below: set[int] = set()
    for v in reversed(order):
        below = any(c in has_marked_below or c in marked for c in kids[v])
        if below:
            has_marked_below.add(v)
        elif kids[v] and sub[v] >= thr:
            marked.add(v)
            leafroots.append(v)
    leafroots.sort()
    leaf_regions: dict[int, set[int]] = {}
    consumed: set[int] = set()
    for z in leafroots:
        own: set[int] = set()
        stack = list(kids[z])
        while stack:
            c = stack.pop()
            own.add(c)
            stack.extend(kids[c])
        leaf_regions[z] = own
        consumed |= own

    exit_owner: Optional[int] = None
    exit_singleton = False
    if exit_v is not None:
        for z, own in leaf_regions.items():
            if exit_v == z or exit_v in own:
                exit_owner = z
                break
        if exit_owner is None:
            exit_singleton = True

    keyset = {root} | set(leafroots)
    if exit_singleton:
        keyset.add(exit_v)
    # backbone: union of root paths of all non-root keys; branchings join it
    backbone: set[int] = {root}
    for z in sorted(keyset - {root}):
        backbone.update(_tree_path(inst, root, z))
    for v in sorted(backbone):
        if v in verts and sum(1 for c in kids.get(v, ()) if c in backbone) >= 2:
            keyset.add(v)

    # split the unconsumed edges at key vertices
    remaining = sorted(edges - consumed)
    parent_uf: dict[int, int] = {e: e for e in remaining}

    def find(e: int) -> int:
        while parent_uf[e] != e:
            parent_uf[e] = parent_uf[parent_uf[e]]
            e = parent_uf[e]
        return e

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent_uf[ra] = rb

    rem_set = set(remaining)
    for c in remaining:
        # merge with the parent edge at a non-key junction (the edge above
        # vertex v is keyed by v itself)
        v = inst.parent[c]
        if v not in keyset and v in rem_set:
            union(c, v)

    pieces: dict[int, list[int]] = {}
    for e in remaining:
        pieces.setdefault(find(e), []).append(e)

    raw: list[dict] = []
    danglings: list[tuple[int, list[int]]] = []
    for group in pieces.values():
        childset = set(group)
        # the top edge is the unique one whose parent vertex is not reached from below
        top_candidates = [c for c in group if inst.parent[c] not in childset]
        assert top_candidates
        top_vertex = min(
            (inst.parent[c] for c in top_candidates),
            key=lambda v: (inst.dist_root(v), v),
        )
        bottoms = sorted(k for k in keyset if k != top_vertex and k in childset)
        if len(bottoms) > 1:
            raise UcvrpError(f"piece with multiple key leaves: {bottoms}")
        if bottoms:
            raw.extend(_peel_pair(inst, childset, top_vertex, bottoms[0], sub, kids, thr))
        else:
            danglings.append((top_vertex, group))

    for top, group in sorted(danglings):
        host = None
        for entry in raw:
            if entry["root"] == top and entry["tag"] == "upmost":
                if host is None or entry["exit"] < host["exit"]:
                    host = entry
        if host is not None:
            host["edges"] |= set(group)
        else:
            # the whole area is light: a single ending region at the root
            whole = None
            for entry in raw:
                if entry["tag"] == "whole" and entry["root"] == top:
                    whole = entry
            if whole is None:
                raw.append({"root": top, "exit": None, "edges": set(group), "tag": "whole"})
            else:
                whole["edges"] |= set(group)

    for z in leafroots:
        raw.append(
            {
                "root": z,
                "exit": exit_v if exit_owner == z else None,
                "edges": leaf_regions[z],
                "tag": "leaf",
            }
        )
    if exit_singleton:
        raw.append({"root": exit_v, "exit": exit_v, "edges": set(), "tag": "exit-singleton"})

    raw.sort(key=lambda r: (inst.dist_root(r["root"]), r["root"], r["exit"] if r["exit"] is not None else -1))
    regions = []
    for idx, entry in enumerate(raw):
        e = frozenset(entry["edges"])
        exit_vertex = entry["exit"]
        spine = (
            tuple(_tree_path(inst, entry["root"], exit_vertex))
            if exit_vertex is not None
            else None
        )
        regions.append(
            Region(
                kind=kind,
                rid="",
                edges=e,
                vertices=_edge_vertices(inst, e, entry["root"]),
                root_vertex=entry["root"],
                exit_vertex=exit_vertex,
                spine=spine,
                tag=entry["tag"],
            )
        )
    return regions


def _peel_pair(inst, piece: set[int], top: int, bottom: int, sub, kids, thr) -> list[dict]:
    """Peel regions of demand in [thr, 2*thr) bottom-up along the top-bottom path."""
    path = _tree_path(inst, top, bottom)
    pos = {v: i for i, v in enumerate(path)}
    # demand of the piece-subtree hanging at each vertex, bottom excluded
    dp: dict[int, Fraction] = {}

    def piece_kids(v):
        return [c for c in kids.get(v, ()) if c in piece]

    order = [path[0]]
    i = 0
    while i < len(order):
        order.extend(piece_kids(order[i]))
        i += 1
    for v in reversed(order):
        d = inst.demand.get(v, ZERO) if v != bottom else ZERO
        for c in piece_kids(v):
            d += dp[c]
        dp[v] = d

    # anchor every edge to the deepest path vertex above it
    anchor: dict[int, int] = {}
    for v in path:
        for c in piece_kids(v):
            if c not in pos:
                stack = [c]
                while stack:
                    u = stack.pop()
                    anchor[u] = v
                    stack.extend(piece_kids(u))
    out: list[dict] = []
    x = bottom
    while True:
        found = None
        for i in range(pos[x] - 1, 0, -1):
            if dp[path[i]] - dp[x] >= thr:
                found = i
                break
        if found is None:
            break
        v = path[found]
        segment: set[int] = set()
        for j in range(found + 1, pos[x] + 1):
            segment.add(path[j])  # path edges are keyed by their child vertex
        for e, a in anchor.items():
            if found <= pos[a] < pos[x]:
                segment.add(e)
        out.append({"root": v, "exit": x, "edges": segment, "tag": "internal"})
        x = v
    upmost: set[int] = set(piece)
    for entry in out:
        upmost -= entry["edges"]
    out.append({"root": top, "exit": x, "edges": upmost, "tag": "upmost"})
    return out


# ---------------------------------------------------------------------------
# The four levels
# ---------------------------------------------------------------------------


def split_components(inst: Instance, p: Params) -> list[Region]:
    """Partition the tree edges into components of demand at most 2*gamma."""
    edges = frozenset(v for v in inst.vertices() if v != inst.root)
    if not edges:
        return [
            Region(
                kind="component",
                rid="c0",
                edges=frozenset(),
                vertices=frozenset({inst.root}),
                root_vertex=inst.root,
                tag="whole",
            )
        ]
    regions = _peel(inst, edges, inst.root, None, p.gamma, "component")
    return [replace(r, rid=f"c{i}") for i, r in enumerate(regions)]


def big_terminals(inst: Instance, comp: Region, p: Params) -> frozenset[int]:
    return frozenset(
        v for v in comp.vertices if v in inst.demand and inst.demand[v] > p.gamma_prime
    )


def split_blocks(inst: Instance, comp: Region, p: Params) -> list[Region]:
    """Split a component at its big terminals, root, exit, and the branching
    vertices of the subtree spanning them."""
    if not comp.edges:
        return []
    bigs = big_terminals(inst, comp, p)
    u_set = set(bigs) | {comp.root_vertex}
    if comp.exit_vertex is not None:
        u_set.add(comp.exit_vertex)
    steiner: set[int] = {comp.root_vertex}
    for u in sorted(u_set):
        steiner.update(_tree_path(inst, comp.root_vertex, u))
    kids: dict[int, list[int]] = {}
    for c in comp.edges:
        kids.setdefault(inst.parent[c], []).append(c)
    keyset = set(u_set)
    for v in sorted(steiner):
        if sum(1 for c in kids.get(v, ()) if c in steiner) >= 2:
            keyset.add(v)

    parent_uf = {e: e for e in comp.edges}

    def find(e):
        while parent_uf[e] != e:
            parent_uf[e] = parent_uf[parent_uf[e]]
            e = parent_uf[e]
        return e

    for c in comp.edges:
        v = inst.parent[c]
        if v not in keyset and v in comp.edges:
            r1, r2 = find(c), find(v)
            if r1 != r2:
                parent_uf[r1] = r2
    groups: dict[int, list[int]] = {}
    for e in comp.edges:
        groups.setdefault(find(e), []).append(e)

    blocks = []
    for group in groups.values():
        childset = set(group)
        tops = [c for c in group if inst.parent[c] not in childset]
        root = min((inst.parent[c] for c in tops), key=lambda v: (inst.dist_root(v), v))
        inner_keys = sorted(k for k in keyset if k != root and k in childset)
        if len(inner_keys) > 1:
            raise UcvrpError(f"block with multiple key leaves: {inner_keys}")
        exit_vertex = inner_keys[0] if inner_keys else None
        spine = tuple(_tree_path(inst, root, exit_vertex)) if exit_vertex is not None else None
        blocks.append(
            Region(
                kind="block",
                rid="",
                edges=frozenset(group),
                vertices=_edge_vertices(inst, frozenset(group), root),
                root_vertex=root,
                exit_vertex=exit_vertex,
                spine=spine,
            )
        )
    blocks.sort(key=lambda b: (inst.dist_root(b.root_vertex), b.root_vertex, min(b.edges)))
    return [replace(b, rid=f"{comp.rid}/b{i}") for i, b in enumerate(blocks)]


def split_clusters(inst: Instance, block: Region, p: Params) -> list[Region]:
    """Partition a block into clusters of demand at most 2*gamma_prime."""
    regions = _peel(
        inst, block.edges, block.root_vertex, block.exit_vertex, p.gamma_prime, "cluster"
    )
    return [replace(r, rid=f"{block.rid}/x{i}") for i, r in enumerate(regions)]


def split_cells(inst: Instance, cluster: Region, p: Params) -> list[Region]:
    """Slice a passing cluster into at most 1/eps cells along its spine.

    For i in [1, 1/eps - 1] the unique spine edge straddling distance
    i*eps*len is removed; the vertex sets of the leftover connected subgraphs
    are the cells.  Ending clusters and zero-length spines give a single cell.
    """
    base_rid = f"{cluster.rid}/s0"
    if cluster.exit_vertex is None:
        return [replace(cluster, kind="cell", rid=base_rid, tag="")]
    total = spine_weight(inst, cluster)
    if total == 0:
        return [replace(cluster, kind="cell", rid=base_rid, tag="")]
    spine = cluster.spine
    assert spine is not None
    cum = [ZERO]
    for v in spine[1:]:
        cum.append(cum[-1] + inst.weight[v])
    removed: set[int] = set()
    k = p.inv_eps
    for i in range(1, k):
        target = Fraction(i, k) * total
        for j in range(len(spine) - 1):
            lo, hi = cum[j], cum[j + 1]
            if lo <= target < hi:
                removed.add(spine[j + 1])
                break
    kept = cluster.edges - removed
    # connected components of the cluster after dropping the straddling edges
    parent_uf = {v: v for v in cluster.vertices}

    def find(v):
        while parent_uf[v] != v:
            parent_uf[v] = parent_uf[parent_uf[v]]
            v = parent_uf[v]
        return v

    for c in kept:
        a, b = find(c), find(inst.parent[c])
        if a != b:
            parent_uf[a] = b
    groups: dict[int, set[int]] = {}
    for v in cluster.vertices:
        groups.setdefault(find(v), set()).add(v)
    spine_pos = {v: i for i, v in enumerate(spine)}
    cells = []
    for verts in groups.values():
        on_spine = sorted(spine_pos[v] for v in verts if v in spine_pos)
        assert on_spine, "every cell contains a spine segment"
        root = spine[on_spine[0]]
        exit_vertex = spine[on_spine[-1]]
        cells.append(
            Region(
                kind="cell",
                rid="",
                edges=frozenset(c for c in kept if c in verts and inst.parent[c] in verts),
                vertices=frozenset(verts),
                root_vertex=root,
                exit_vertex=exit_vertex,
                spine=tuple(spine[i] for i in range(on_spine[0], on_spine[-1] + 1)),
            )
        )
    cells.sort(key=lambda s: spine_pos[s.root_vertex])
    return [replace(s, rid=f"{cluster.rid}/s{i}") for i, s in enumerate(cells)]


# ---------------------------------------------------------------------------
# Hierarchy
# ---------------------------------------------------------------------------


@dataclass
class Hierarchy:
    inst: Instance
    params: Params
    components: list[Region]
    blocks_of: dict[int, list[Region]]
    clusters_of: dict[tuple[int, int], list[Region]]
    cells_of: dict[tuple[int, int, int], list[Region]]
    big_terminals_of: dict[int, frozenset[int]]

    def component_clusters(self, ci: int) -> list[tuple[tuple[int, int, int], Region]]:
        out = []
        for bi, _ in enumerate(self.blocks_of[ci]):
            for xi, cluster in enumerate(self.clusters_of[(ci, bi)]):
                out.append(((ci, bi, xi), cluster))
        return out

    def component_terminals(self, ci: int) -> tuple[int, ...]:
        comp = self.components[ci]
        return tuple(sorted(v for v in comp.vertices if v in self.inst.demand))


def build_hierarchy(inst: Instance, p: Params) -> Hierarchy:
    components = split_components(inst, p)
    blocks_of: dict[int, list[Region]] = {}
    clusters_of: dict[tuple[int, int], list[Region]] = {}
    cells_of: dict[tuple[int, int, int], list[Region]] = {}
    bigs: dict[int, frozenset[int]] = {}
    for ci, comp in enumerate(components):
        bigs[ci] = big_terminals(inst, comp, p)
        blocks = split_blocks(inst, comp, p)
        blocks_of[ci] = blocks
        for bi, block in enumerate(blocks):
            clusters = split_clusters(inst, block, p)
            clusters_of[(ci, bi)] = clusters
            for xi, cluster in enumerate(clusters):
                cells_of[(ci, bi, xi)] = split_cells(inst, cluster, p)
    return Hierarchy(inst, p, components, blocks_of, clusters_of, cells_of, bigs)


@dataclass(frozen=True)
class CountReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def count_check(h: Hierarchy, ci: int, p: Params) -> CountReport:
    """Assert the per-component count bounds implied by the decomposition."""
    bad = []
    n_bigs = len(h.big_terminals_of[ci])
    n_blocks = len(h.blocks_of[ci])
    n_cells = sum(
        len(h.cells_of[(ci, bi, xi)])
        for bi in range(n_blocks)
        for xi in range(len(h.clusters_of[(ci, bi)]))
    )
    ratio = p.gamma / p.gamma_prime
    big_bound = 2 * ratio
    block_bound = 4 + 4 * ratio
    cell_bound = block_bound * 3 * (2 * ratio + 1) * p.inv_eps
    if n_bigs > big_bound:
        bad.append(f"big terminals {n_bigs} > {format_rational(big_bound)}")
    if n_blocks > block_bound:
        bad.append(f"blocks {n_blocks} > {format_rational(block_bound)}")
    if n_cells > cell_bound:
        bad.append(f"cells {n_cells} > {format_rational(cell_bound)}")
    return CountReport(tuple(bad))


def _connected_region(inst: Instance, r: Region) -> bool:
    """Every region edge must reach the region root through region edges."""
    for e in r.edges:
        v = e
        while v != r.root_vertex:
            if v not in r.edges:
                return False
            v = inst.parent[v]
    return True


def _shares_only_at_boundaries(a: Region, b: Region) -> bool:
    boundary = {a.root_vertex, a.exit_vertex, b.root_vertex, b.exit_vertex}
    return (set(a.vertices) & set(b.vertices)) <= boundary


def check_hierarchy(h: Hierarchy) -> list[str]:
    """Re-check every structural invariant of the decomposition; returns
    human-readable violations (empty list when sound)."""
    inst, p = h.inst, h.params
    bad: list[str] = []
    all_edges = set(v for v in inst.vertices() if v != inst.root)
    seen: set[int] = set()
    for comp in h.components:
        if comp.edges & seen:
            bad.append(f"{comp.rid}: edge reused across components")
        seen |= comp.edges
        if not _connected_region(inst, comp):
            bad.append(f"{comp.rid}: not connected at its root")
    if seen != all_edges:
        bad.append("components do not partition the tree edges")
    for i, a in enumerate(h.components):
        for b in h.components[i + 1:]:
            if not _shares_only_at_boundaries(a, b):
                bad.append(f"{a.rid}/{b.rid}: share a non-boundary vertex")

    for ci, comp in enumerate(h.components):
        if region_demand(inst, comp) > 2 * p.gamma:
            bad.append(f"{comp.rid}: demand exceeds 2*gamma")
        block_edges: set[int] = set()
        for block in h.blocks_of[ci]:
            if block.edges & block_edges:
                bad.append(f"{block.rid}: edge reused across blocks")
            block_edges |= block.edges
            for t in block.vertices:
                if (
                    t in inst.demand
                    and t not in (block.root_vertex, block.exit_vertex)
                    and inst.demand[t] > p.gamma_prime
                ):
                    bad.append(f"{block.rid}: big terminal {t} strictly inside")
        if block_edges != set(comp.edges):
            bad.append(f"{comp.rid}: blocks do not partition the component edges")
        rep = count_check(h, ci, p)
        bad.extend(f"{comp.rid}: {v}" for v in rep.violations)

        for bi, block in enumerate(h.blocks_of[ci]):
            if not _connected_region(inst, block):
                bad.append(f"{block.rid}: not connected at its root")
            clusters = h.clusters_of[(ci, bi)]
            cl_edges: set[int] = set()
            demand_b = region_demand(inst, block)
            if len(clusters) > 3 * (demand_b / p.gamma_prime + 1):
                bad.append(f"{block.rid}: cluster count exceeds 3*(demand/gamma'+1)")
            for i, a in enumerate(clusters):
                for b in clusters[i + 1:]:
                    if not _shares_only_at_boundaries(a, b):
                        bad.append(f"{a.rid}/{b.rid}: share a non-boundary vertex")
            good = sum(
                1
                for x in clusters
                if x.tag in ("leaf", "exit-singleton", "whole")
                or region_demand(inst, x) >= p.gamma_prime
            )
            if len(clusters) > 3 * max(good, 0) and clusters:
                bad.append(f"{block.rid}: cluster count exceeds 3*good clusters")
            if block.exit_vertex is not None and not any(
                x.exit_vertex == block.exit_vertex for x in clusters
            ):
                bad.append(f"{block.rid}: no cluster carries the block exit")
            for xi, cluster in enumerate(clusters):
                if cluster.edges & cl_edges:
                    bad.append(f"{cluster.rid}: edge reused across clusters")
                cl_edges |= cluster.edges
                if cluster.edges and not _connected_region(inst, cluster):
                    bad.append(f"{cluster.rid}: not connected at its root")
                if region_demand(inst, cluster) > 2 * p.gamma_prime:
                    bad.append(f"{cluster.rid}: demand exceeds 2*gamma_prime")
                for t in cluster.vertices:
                    if (
                        t in inst.demand
                        and t not in (cluster.root_vertex, cluster.exit_vertex)
                        and inst.demand[t] > p.gamma_prime
                    ):
                        bad.append(f"{cluster.rid}: big terminal {t} strictly inside")
                cells = h.cells_of[(ci, bi, xi)]
                if len(cells) > p.inv_eps:
                    bad.append(f"{cluster.rid}: more than 1/eps cells")
                cell_verts: set[int] = set()
                for cell in cells:
                    if cell.vertices & cell_verts:
                        bad.append(f"{cell.rid}: vertex reused across cells")
                    cell_verts |= cell.vertices
                    if cluster.exit_vertex is not None:
                        if spine_weight(inst, cell) > p.eps * spine_weight(inst, cluster):
                            bad.append(f"{cell.rid}: cell spine exceeds eps * cluster spine")
                if cell_verts != set(cluster.vertices):
                    bad.append(f"{cluster.rid}: cells do not partition the cluster vertices")
            if cl_edges != set(block.edges):
                bad.append(f"{block.rid}: clusters do not partition the block edges")
    return bad


def describe_hierarchy(h: Hierarchy) -> str:
    """Indented text dump used by the verify subcommand for fixture diffs."""
    inst = h.inst
    lines = []
    for ci, comp in enumerate(h.components):
        lines.append(_describe_region(inst, comp))
        for bi, block in enumerate(h.blocks_of[ci]):
            lines.append("  " + _describe_region(inst, block))
            for xi, cluster in enumerate(h.clusters_of[(ci, bi)]):
                lines.append("    " + _describe_region(inst, cluster))
                for cell in h.cells_of[(ci, bi, xi)]:
                    lines.append("      " + _describe_region(inst, cell))
    return "\n".join(lines) + "\n"


def _describe_region(inst: Instance, r: Region) -> str:
    exit_s = "-" if r.exit_vertex is None else str(r.exit_vertex)
    tag = f" [{r.tag}]" if r.tag else ""
    return (
        f"{r.kind} {r.rid}{tag}: root={r.root_vertex} exit={exit_s} "
        f"demand={format_rational(region_demand(inst, r))}"
    )
