"""Integral rounding of a fractional star cover on a bipartite graph.

Each b-vertex must be assigned to one of its neighbours so that no a-vertex
receives more than its incident edge weight plus the largest single b-weight.
The route: spread each w(b) proportionally over its edges, cancel cycles in
the support until it is a forest, root every support tree at an a-vertex, and
send each b to one of its child a-vertices when it has any, else to its
parent.  An a-vertex then collects its leaf children (whose full weight equals
the flow on their unique edge) plus at most one parent b, which caps the
excess at max w(b).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable

from .instance import UcvrpError, ZERO

Vertex = Hashable


@dataclass(frozen=True)
class BipartiteWeights:
    a_side: tuple
    b_side: tuple
    edge_weight: dict  # (a, b) -> Fraction >= 0
    b_weight: dict  # b -> Fraction

    def neighbours(self, b) -> list:
        return [a for a in self.a_side if (a, b) in self.edge_weight]


def _validate(g: BipartiteWeights) -> None:
    for (a, b), w in g.edge_weight.items():
        if w < 0:
            raise UcvrpError(f"negative edge weight on ({a!r}, {b!r})")
        if a not in g.a_side or b not in g.b_side:
            raise UcvrpError(f"edge ({a!r}, {b!r}) uses unknown vertices")
    for b in g.b_side:
        nb = g.neighbours(b)
        if not nb:
            raise UcvrpError(f"b-vertex {b!r} has no neighbours")
        total = sum((g.edge_weight[(a, b)] for a in nb), ZERO)
        wb = g.b_weight.get(b, ZERO)
        if not (ZERO <= wb <= total):
            raise UcvrpError(
                f"b-vertex {b!r} weight {wb} outside [0, incident edge total {total}]"
            )


def assign(g: BipartiteWeights) -> dict:
    """Map each b to a neighbour a so that for every a the assigned b-weights
    exceed a's incident edge weights by at most max_b w(b)."""
    _validate(g)
    flow: dict[tuple, Fraction] = {}
    result: dict = {}
    for b in g.b_side:
        nb = g.neighbours(b)
        wb = g.b_weight.get(b, ZERO)
        total = sum((g.edge_weight[(a, b)] for a in nb), ZERO)
        if wb == 0 or total == 0:
            result[b] = min(nb, key=_key)  # nothing to spread; excess contribution 0
            continue
        for a in nb:
            x = wb * g.edge_weight[(a, b)] / total
            if x > 0:
                flow[(a, b)] = x

    _cancel_cycles(flow)

    # rooted forest over the support
    adj: dict = {}
    for (a, b) in flow:
        adj.setdefault(("a", a), []).append(("b", b))
        adj.setdefault(("b", b), []).append(("a", a))
    for node in adj:
        adj[node].sort(key=lambda n: _key(n[1]))
    visited: set = set()
    for start in sorted((n for n in adj if n[0] == "a"), key=lambda n: _key(n[1])):
        if start in visited:
            continue
        stack = [(start, None)]
        while stack:
            node, parent = stack.pop()
            if node in visited:
                continue
            visited.add(node)
            kind, name = node
            if kind == "b":
                children = [n for n in adj[node] if n != parent]
                if children:
                    result[name] = children[0][1]
                else:
                    assert parent is not None
                    result[name] = parent[1]
            for nxt in adj[node]:
                if nxt != parent:
                    stack.append((nxt, node))
    missing = [b for b in g.b_side if b not in result]
    assert not missing, f"unassigned b-vertices: {missing}"
    _check_bound(g, result)
    return result


def _key(x):
    return (str(type(x)), repr(x))


def assignment_excess(g: BipartiteWeights, f: dict) -> dict:
    """Per-a excess: assigned b-weight minus incident edge weight."""
    out = {}
    for a in g.a_side:
        got = sum((g.b_weight.get(b, ZERO) for b in g.b_side if f.get(b) == a), ZERO)
        cap = sum((w for (x, _), w in g.edge_weight.items() if x == a), ZERO)
        out[a] = got - cap
    return out


def _check_bound(g: BipartiteWeights, f: dict) -> None:
    if not g.b_side:
        return
    bound = max(g.b_weight.get(b, ZERO) for b in g.b_side)
    for a, excess in assignment_excess(g, f).items():
        if excess > bound:
            raise AssertionError(
                f"assignment excess {excess} at {a!r} exceeds max b-weight {bound}"
            )


def _cancel_cycles(flow: dict) -> None:
    """Remove cycles from the support by alternately shifting flow around the
    cycle; per-vertex totals are preserved and at least one edge zeroes out."""
    while True:
        cycle = _find_cycle(flow)
        if cycle is None:
            return
        # cycle: even-length list of edges, alternating +/- orientation
        minus = cycle[1::2]
        delta = min(flow[e] for e in minus)
        # choose the orientation that zeroes the lexicographically smallest
        # minimal edge for determinism
        plus_min = min((flow[e] for e in cycle[0::2]))
        if plus_min < delta:
            cycle = cycle[1:] + cycle[:1]
            minus = cycle[1::2]
            delta = min(flow[e] for e in minus)
        for e in cycle[0::2]:
            flow[e] += delta
        for e in minus:
            flow[e] -= delta
            if flow[e] == 0:
                del flow[e]


def _find_cycle(flow: dict):
    """Return the edges of one support cycle (even length), or None.

    Leaf vertices are peeled off until only the 2-core remains, then the cycle
    is traced by walking from the smallest remaining vertex, always leaving on
    the smallest unused edge.
    """
    adj: dict = {}
    for (a, b) in flow:
        adj.setdefault(("a", a), set()).add(("b", b))
        adj.setdefault(("b", b), set()).add(("a", a))
    degree = {node: len(nbrs) for node, nbrs in adj.items()}
    queue = [node for node, d in degree.items() if d <= 1]
    alive = set(adj)
    while queue:
        node = queue.pop()
        if node not in alive:
            continue
        alive.discard(node)
        for nbr in adj[node]:
            if nbr in alive:
                degree[nbr] -= 1
                if degree[nbr] <= 1:
                    queue.append(nbr)
    if not alive:
        return None
    start = min(alive, key=lambda n: (n[0], _key(n[1])))
    walk = [start]
    index = {start: 0}
    prev = None
    node = start
    while True:
        nxt = min(
            (n for n in adj[node] if n in alive and n != prev),
            key=lambda n: _key(n[1]),
        )
        if nxt in index:
            cycle_nodes = walk[index[nxt]:] + [nxt]
            edges = []
            for u, v in zip(cycle_nodes, cycle_nodes[1:]):
                a = u[1] if u[0] == "a" else v[1]
                b = u[1] if u[0] == "b" else v[1]
                edges.append((a, b))
            return edges
        index[nxt] = len(walk)
        walk.append(nxt)
        prev, node = node, nxt
    return None
