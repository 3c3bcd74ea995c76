"""Instance model for unsplittable capacitated vehicle routing on rooted trees.

All demands, edge weights and costs are exact rationals (`fractions.Fraction`);
there is no floating point anywhere in a solver path.  An instance is a rooted
tree given by a parent map, with a weight on every (parent, child) edge and a
demand in (0, 1] on every terminal vertex.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

Rational = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


class UcvrpError(Exception):
    """Base class for solver errors (invariant violations, bad input)."""


class ParseError(UcvrpError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CapExceeded(UcvrpError):
    """A configured size cap was hit; the run fails loudly instead of truncating."""


def parse_rational(text: str) -> Fraction:
    """Parse a decimal string or 'p/q' fraction exactly."""
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational: {text!r}") from exc


def format_rational(x: Fraction) -> str:
    """Exact decimal when the denominator is 2^a*5^b, else 'p/q'."""
    den = x.denominator
    twos = fives = 0
    d = den
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{x.numerator}/{x.denominator}"
    digits = max(twos, fives)
    if digits == 0:
        return str(x.numerator)
    scaled = abs(x.numerator) * 10**digits // den
    sign = "-" if x.numerator < 0 else ""
    whole, frac = divmod(scaled, 10**digits)
    return f"{sign}{whole}.{str(frac).zfill(digits)}"


@dataclass(eq=False)
class Instance:
    """Rooted edge-weighted tree with terminal demands.

    `parent[v]` is None exactly for the root; `weight[v]` is the weight of the
    edge (parent[v], v) and 0 for the root.  Edges are identified with their
    child vertex throughout the code base.
    """

    parent: tuple[Optional[int], ...]
    weight: tuple[Fraction, ...]
    root: int
    demand: dict[int, Fraction]

    _children: Optional[dict[int, tuple[int, ...]]] = field(
        default=None, repr=False, compare=False
    )
    _dist: Optional[tuple[Fraction, ...]] = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.parent)

    def vertices(self) -> range:
        return range(self.n)

    def children(self, v: int) -> tuple[int, ...]:
        if self._children is None:
            kids: dict[int, list[int]] = {u: [] for u in self.vertices()}
            for u in self.vertices():
                p = self.parent[u]
                if p is not None:
                    kids[p].append(u)
            self._children = {u: tuple(sorted(cs)) for u, cs in kids.items()}
        return self._children[v]

    def dist_root(self, v: int) -> Fraction:
        """Distance from the depot to v."""
        if self._dist is None:
            dist: list[Optional[Fraction]] = [None] * self.n
            dist[self.root] = ZERO
            for u in self._topo_order():
                p = self.parent[u]
                if p is not None:
                    dist[u] = dist[p] + self.weight[u]
            self._dist = tuple(dist)  # type: ignore[arg-type]
        return self._dist[v]

    def _topo_order(self) -> list[int]:
        order = [self.root]
        i = 0
        while i < len(order):
            order.extend(self.children(order[i]))
            i += 1
        return order

    def is_leaf(self, v: int) -> bool:
        return not self.children(v)

    def terminals(self) -> tuple[int, ...]:
        return tuple(sorted(self.demand))

    def total_demand(self) -> Fraction:
        return sum(self.demand.values(), ZERO)

    def path_to_root(self, v: int) -> list[int]:
        """Edges (as child ids) from v up to the root."""
        out = []
        while v != self.root:
            out.append(v)
            p = self.parent[v]
            assert p is not None
            v = p
        return out


def validate_instance(inst: Instance) -> None:
    n = inst.n
    roots = [v for v in inst.vertices() if inst.parent[v] is None]
    if len(roots) != 1 or roots[0] != inst.root:
        raise ParseError("tree must have exactly one root (parent -1)")
    if inst.weight[inst.root] != 0:
        raise ParseError("root weight must be 0")
    # acyclicity / connectivity: every vertex must reach the root
    state = [0] * n  # 0 unseen, 1 on current chain, 2 reaches root
    state[inst.root] = 2
    for v in inst.vertices():
        chain = []
        u = v
        while state[u] == 0:
            state[u] = 1
            chain.append(u)
            p = inst.parent[u]
            if p is None or not (0 <= p < n):
                raise ParseError(f"vertex {u} has invalid parent")
            u = p
        if state[u] == 1:
            raise ParseError("cyclic parent structure")
        for w in chain:
            state[w] = 2
    for v, d in inst.demand.items():
        if not (0 <= v < n):
            raise ParseError(f"terminal {v} is not a vertex")
        if not (ZERO < d <= ONE):
            raise ParseError(f"demand outside (0,1]: {format_rational(d)}")
    for v in inst.vertices():
        if inst.weight[v] < 0:
            raise ParseError("negative weight")


def parse_instance(text: str | bytes) -> Instance:
    """Parse the line-oriented instance format.

    Format: header ``ucvrp 1``, vertex records ``v <id> <parent|-1> <weight>``,
    terminal records ``t <id> <demand>``; ``#`` starts a comment.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    verts: dict[int, tuple[int, Fraction]] = {}
    demands: dict[int, Fraction] = {}
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fieldsv = line.split()
        if not saw_header:
            if fieldsv != ["ucvrp", "1"]:
                raise ParseError("expected header 'ucvrp 1'", lineno)
            saw_header = True
            continue
        kind = fieldsv[0]
        if kind == "v":
            if len(fieldsv) != 4:
                raise ParseError("vertex record needs: v <id> <parent> <weight>", lineno)
            try:
                vid, par = int(fieldsv[1]), int(fieldsv[2])
                w = parse_rational(fieldsv[3])
            except ValueError as exc:
                raise ParseError(str(exc), lineno)
            if vid in verts:
                raise ParseError(f"duplicate vertex {vid}", lineno)
            if w < 0:
                raise ParseError("negative weight", lineno)
            verts[vid] = (par, w)
        elif kind == "t":
            if len(fieldsv) != 3:
                raise ParseError("terminal record needs: t <id> <demand>", lineno)
            try:
                vid = int(fieldsv[1])
                d = parse_rational(fieldsv[2])
            except ValueError as exc:
                raise ParseError(str(exc), lineno)
            if vid in demands:
                raise ParseError(f"duplicate terminal {vid}", lineno)
            if not (ZERO < d <= ONE):
                raise ParseError(f"demand outside (0,1]: {fieldsv[2]}", lineno)
            demands[vid] = d
        else:
            raise ParseError(f"unknown record {kind!r}", lineno)
    if not saw_header:
        raise ParseError("empty instance file")
    n = len(verts)
    if set(verts) != set(range(n)):
        raise ParseError("vertex ids must be dense 0..n-1")
    parent: list[Optional[int]] = [None] * n
    weight: list[Fraction] = [ZERO] * n
    root = None
    for vid, (par, w) in verts.items():
        if par == -1:
            if root is not None:
                raise ParseError("multiple roots")
            root = vid
            if w != 0:
                raise ParseError("root weight must be 0")
        else:
            parent[vid] = par
            weight[vid] = w
    if root is None:
        raise ParseError("no root vertex (parent -1)")
    for vid in demands:
        if vid >= n:
            raise ParseError(f"terminal {vid} is not a vertex")
    inst = Instance(tuple(parent), tuple(weight), root, demands)
    validate_instance(inst)
    return inst


def write_instance(inst: Instance, comments: Iterable[str] = ()) -> str:
    lines = ["ucvrp 1"]
    lines.extend(f"# {c}" for c in comments)
    for v in inst.vertices():
        p = inst.parent[v]
        lines.append(f"v {v} {-1 if p is None else p} {format_rational(inst.weight[v])}")
    for v in inst.terminals():
        lines.append(f"t {v} {format_rational(inst.demand[v])}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Tours and solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tour:
    """A tour is identified by the terminals it covers; the closed walk from
    the depot is implied (twice the spanning subtree).  `dummy` is bookkeeping
    demand from value padding, never attached to a vertex."""

    terminals: frozenset[int]
    dummy: Fraction = ZERO


@dataclass(frozen=True)
class Solution:
    tours: tuple[Tour, ...]


def tour_cost(inst: Instance, terminals: Iterable[int]) -> Fraction:
    """Twice the weight of the minimal subtree connecting the root and `terminals`."""
    seen: set[int] = set()
    total = ZERO
    for t in terminals:
        if not (0 <= t < inst.n):
            raise UcvrpError(f"unknown vertex id: {t}")
        v = t
        while v != inst.root and v not in seen:
            seen.add(v)
            total += inst.weight[v]
            p = inst.parent[v]
            assert p is not None
            v = p
    return 2 * total


def tour_demand(inst: Instance, tour: Tour) -> Fraction:
    return sum((inst.demand[t] for t in tour.terminals), ZERO) + tour.dummy


def solution_cost(inst: Instance, sol: Solution) -> Fraction:
    return sum((tour_cost(inst, t.terminals) for t in sol.tours), ZERO)


@dataclass(frozen=True)
class FeasibilityReport:
    uncovered: tuple[int, ...]
    double_covered: tuple[int, ...]
    unknown: tuple[int, ...]
    capacity_excess: tuple[tuple[int, Fraction], ...]

    @property
    def ok(self) -> bool:
        return not (
            self.uncovered or self.double_covered or self.unknown or self.capacity_excess
        )

    def messages(self) -> list[str]:
        out = []
        for v in self.uncovered:
            out.append(f"terminal {v} is not covered by a single tour")
        for v in self.double_covered:
            out.append(f"terminal {v} is covered by more than one tour (demand is unsplittable)")
        for v in self.unknown:
            out.append(f"tour references unknown terminal {v}")
        for i, excess in self.capacity_excess:
            out.append(
                f"tour {i} exceeds the capacity of 1 by {format_rational(excess)}"
            )
        return out


def check_feasible(inst: Instance, sol: Solution) -> FeasibilityReport:
    """Report coverage and capacity violations; empty report iff feasible."""
    seen: dict[int, int] = {}
    double: set[int] = set()
    unknown: set[int] = set()
    excess: list[tuple[int, Fraction]] = []
    for i, tour in enumerate(sol.tours):
        load = tour.dummy
        for v in tour.terminals:
            if v not in inst.demand:
                unknown.add(v)
                continue
            load += inst.demand[v]
            if v in seen:
                double.add(v)
            seen[v] = i
        if load > ONE:
            excess.append((i, load - ONE))
    uncovered = tuple(sorted(set(inst.demand) - set(seen)))
    return FeasibilityReport(
        uncovered=uncovered,
        double_covered=tuple(sorted(double)),
        unknown=tuple(sorted(unknown)),
        capacity_excess=tuple(excess),
    )


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def _prune_barren_leaves(parent, weight, demand, root):
    """Drop non-terminal leaves until every leaf carries demand."""
    kids: dict[int, set[int]] = {v: set() for v in parent}
    for v, p in parent.items():
        if p is not None:
            kids[p].add(v)
    queue = [v for v in parent if not kids[v] and v not in demand and v != root]
    while queue:
        v = queue.pop()
        p = parent[v]
        del parent[v]
        del weight[v]
        if p is not None:
            kids[p].discard(v)
            if not kids[p] and p not in demand and p != root:
                queue.append(p)


def preprocess_with_origin(inst: Instance) -> tuple[Instance, dict[int, int]]:
    """Normalize an instance; also return a map from new terminal ids back to
    the original terminal ids (for reporting solutions on the input tree).

    After normalization every internal vertex except possibly the root has
    exactly two children, terminals are exactly the leaves, and the optimal
    cost is unchanged.  The root keeps a single child when the input forces it
    (e.g. a depot with one outgoing edge); a synthetic second child would be a
    demand-free leaf, which the leaf-terminal invariant forbids.
    """
    parent: dict[int, Optional[int]] = {v: inst.parent[v] for v in inst.vertices()}
    weight: dict[int, Fraction] = {v: inst.weight[v] for v in inst.vertices()}
    demand: dict[int, Fraction] = dict(inst.demand)
    origin: dict[int, int] = {t: t for t in demand}
    root = inst.root
    fresh = inst.n

    _prune_barren_leaves(parent, weight, demand, root)

    def kids_of() -> dict[int, list[int]]:
        kids: dict[int, list[int]] = {v: [] for v in parent}
        for v, p in parent.items():
            if p is not None:
                kids[p].append(v)
        return {v: sorted(cs) for v, cs in kids.items()}

    # split internal (or root) terminals onto zero-weight pendant leaves
    kids = kids_of()
    for v in sorted(demand):
        if kids[v] or v == root:
            leaf = fresh
            fresh += 1
            parent[leaf] = v
            weight[leaf] = ZERO
            origin[leaf] = origin.pop(v)
            demand[leaf] = demand.pop(v)

    # binarize: a vertex with k >= 3 children keeps its first child and hands
    # the rest to a chain of zero-weight splitter vertices
    kids = kids_of()
    stack = sorted(kids)
    while stack:
        v = stack.pop()
        cs = sorted(c for c, p in parent.items() if p == v)
        if len(cs) <= 2:
            continue
        splitter = fresh
        fresh += 1
        parent[splitter] = v
        weight[splitter] = ZERO
        for c in cs[1:]:
            parent[c] = splitter
        stack.append(splitter)

    # contract degree-2 non-terminal chains into single weighted edges
    changed = True
    while changed:
        changed = False
        kids = kids_of()
        for v in sorted(kids):
            if v == root or v in demand:
                continue
            cs = kids[v]
            if len(cs) == 1:
                (c,) = cs
                parent[c] = parent[v]
                weight[c] = weight[c] + weight[v]
                del parent[v]
                del weight[v]
                changed = True

    # reindex densely in BFS order from the root (stable under old ids)
    kids = kids_of()
    order = [root]
    i = 0
    while i < len(order):
        order.extend(kids[order[i]])
        i += 1
    newid = {old: i for i, old in enumerate(order)}
    new_parent: list[Optional[int]] = [None] * len(order)
    new_weight: list[Fraction] = [ZERO] * len(order)
    for old, i in newid.items():
        p = parent[old]
        new_parent[i] = None if p is None else newid[p]
        new_weight[i] = weight[old]
    new_demand = {newid[v]: d for v, d in demand.items()}
    out = Instance(tuple(new_parent), tuple(new_weight), 0, new_demand)
    assert_preprocessed(out)
    return out, {newid[v]: o for v, o in origin.items()}


def preprocess(inst: Instance) -> Instance:
    return preprocess_with_origin(inst)[0]


def assert_preprocessed(inst: Instance) -> None:
    for v in inst.vertices():
        cs = inst.children(v)
        if inst.is_leaf(v):
            if v not in inst.demand and inst.n > 1:
                raise UcvrpError(f"leaf {v} carries no demand after preprocessing")
        else:
            if v in inst.demand:
                raise UcvrpError(f"internal vertex {v} is a terminal after preprocessing")
            if len(cs) != 2 and v != inst.root:
                raise UcvrpError(f"internal vertex {v} has {len(cs)} children")


# ---------------------------------------------------------------------------
# Bounded-distance predicate
# ---------------------------------------------------------------------------


def check_bounded_distance(inst: Instance, eps: Fraction) -> bool:
    """True iff D_max < (1/eps)^(1/eps - 1) * D_min over depot-terminal distances."""
    if not inst.demand:
        raise UcvrpError("instance has no terminals")
    k = 1 / eps
    if k.denominator != 1 or not (ZERO < eps < ONE):
        raise UcvrpError("eps must be the reciprocal of an integer >= 2")
    dists = [inst.dist_root(t) for t in inst.demand]
    dmin, dmax = min(dists), max(dists)
    return dmax < Fraction(k.numerator) ** (k.numerator - 1) * dmin


# ---------------------------------------------------------------------------
# Instance generators
# ---------------------------------------------------------------------------


def gen_binpacking_path(sizes: list[Fraction]) -> Instance:
    """Path r,v1,..,vn with w(r,v1)=1, other edges 0, demand(v_i)=sizes[i]."""
    if not sizes:
        raise UcvrpError("empty size list")
    _check_sizes(sizes)
    n = len(sizes)
    parent: list[Optional[int]] = [None] + [i for i in range(n)]
    weight = [ZERO] + [ONE] + [ZERO] * (n - 1)
    demand = {i + 1: Fraction(s) for i, s in enumerate(sizes)}
    return Instance(tuple(parent), tuple(weight), 0, demand)


def gen_binpacking_star(sizes: list[Fraction]) -> Instance:
    """Star at v0 with w(r,v0)=1, leaf edges 0, demand(v_i)=sizes[i]."""
    if not sizes:
        raise UcvrpError("empty size list")
    _check_sizes(sizes)
    n = len(sizes)
    parent: list[Optional[int]] = [None, 0] + [1] * n
    weight = [ZERO, ONE] + [ZERO] * n
    demand = {i + 2: Fraction(s) for i, s in enumerate(sizes)}
    return Instance(tuple(parent), tuple(weight), 0, demand)


def _check_sizes(sizes) -> None:
    for s in sizes:
        if not (ZERO < Fraction(s) <= ONE):
            raise UcvrpError(f"demand outside (0,1]: {s}")


def gen_random_instance(
    n_terminals: int,
    seed: int,
    demands: str = "dyadic",
    max_weight: int = 8,
    denom: int = 16,
) -> Instance:
    """Random binary tree with `n_terminals` leaves and positive edge weights.

    `demands`: 'dyadic' draws k/denom with k in 1..denom, 'uniform' draws
    k/100 with k in 1..100.  Deterministic in `seed`.
    """
    if n_terminals < 1:
        raise UcvrpError("need at least one terminal")
    rng = random.Random(seed)
    parent: dict[int, Optional[int]] = {}
    weight: dict[int, Fraction] = {}
    fresh = 0
    nodes = []
    for _ in range(n_terminals):
        nodes.append(fresh)
        fresh += 1
    while len(nodes) > 1:
        i = rng.randrange(len(nodes))
        a = nodes.pop(i)
        j = rng.randrange(len(nodes))
        b = nodes.pop(j)
        p = fresh
        fresh += 1
        for c in (a, b):
            parent[c] = p
            weight[c] = Fraction(rng.randint(1, max_weight))
        nodes.append(p)
    top = nodes[0]
    if n_terminals == 1:
        root = fresh
        fresh += 1
        parent[top] = root
        weight[top] = Fraction(rng.randint(1, max_weight))
    else:
        root = top
    parent[root] = None
    weight[root] = ZERO

    order = sorted(parent)
    newid = {old: i for i, old in enumerate(order)}
    par = [None if parent[v] is None else newid[parent[v]] for v in order]
    wt = [weight[v] for v in order]
    dem: dict[int, Fraction] = {}
    kids = {v: [] for v in order}
    for v in order:
        if parent[v] is not None:
            kids[parent[v]].append(v)
    for v in order:
        if not kids[v]:
            if demands == "dyadic":
                d = Fraction(rng.randint(1, denom), denom)
            elif demands == "uniform":
                d = Fraction(rng.randint(1, 100), 100)
            else:
                raise UcvrpError(f"unknown demand distribution {demands!r}")
            dem[newid[v]] = d
    return Instance(tuple(par), tuple(wt), newid[root], dem)


# ---------------------------------------------------------------------------
# Solution files
# ---------------------------------------------------------------------------


def write_solution(sol: Solution, comments: Iterable[str] = ()) -> str:
    lines = ["ucvrp-sol 1"]
    lines.extend(f"# {c}" for c in comments)
    tours = sorted(sol.tours, key=lambda t: sorted(t.terminals))
    for i, tour in enumerate(tours):
        terms = " ".join(str(v) for v in sorted(tour.terminals))
        lines.append(f"tour {i} dummy={format_rational(tour.dummy)} : {terms}")
    return "\n".join(lines) + "\n"


def parse_solution(text: str) -> Solution:
    tours = []
    saw_header = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if not saw_header:
            if line.split() != ["ucvrp-sol", "1"]:
                raise ParseError("expected header 'ucvrp-sol 1'", lineno)
            saw_header = True
            continue
        if not line.startswith("tour "):
            raise ParseError(f"unknown record: {line!r}", lineno)
        head, _, terms = line.partition(":")
        fieldsv = head.split()
        if len(fieldsv) != 3 or not fieldsv[2].startswith("dummy="):
            raise ParseError("tour record needs: tour <id> dummy=<value> : <terminals>", lineno)
        try:
            dummy = parse_rational(fieldsv[2][len("dummy="):])
            ids = frozenset(int(x) for x in terms.split())
        except ValueError as exc:
            raise ParseError(str(exc), lineno)
        if dummy < 0:
            raise ParseError("negative dummy demand", lineno)
        if not ids and dummy == 0:
            raise ParseError("empty tour", lineno)
        tours.append(Tour(ids, dummy))
    if not saw_header:
        raise ParseError("empty solution file")
    return Solution(tuple(tours))
