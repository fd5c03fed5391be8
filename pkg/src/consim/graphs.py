"""Network topologies: static graphs, density classes, and time-varying
edge schedules whose D-slot window unions stay connected.

Nodes are integers 1..n. Edges are unordered pairs stored as (u, v) with
u < v. All generators are deterministic for a fixed seed.
"""

from __future__ import annotations

import math
import random
from collections import deque
from typing import Iterable, Sequence

Edge = tuple[int, int]


class GraphError(ValueError):
    """Invalid size or infeasible edge count."""


def _norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


class StaticGraph:
    """Connected undirected graph on nodes {1..n} with no self loops."""

    def __init__(self, n: int, edges: Iterable[Edge], validate: bool = True):
        self.n = n
        self.edges: tuple[Edge, ...] = tuple(sorted(_norm_edge(u, v) for u, v in edges))
        if validate:
            self._validate()
        adj: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        self.adjacency: dict[int, tuple[int, ...]] = {
            v: tuple(sorted(nbrs)) for v, nbrs in adj.items()
        }

    def _validate(self) -> None:
        if self.n < 1:
            raise GraphError(f"need at least one node, got n={self.n}")
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self loop at node {u}")
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphError(f"edge ({u},{v}) out of range for n={self.n}")
            if (u, v) in seen:
                raise GraphError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        if not _connected(self.n, self.edges):
            raise GraphError("graph is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def nodes(self) -> range:
        return range(1, self.n + 1)

    def has_edge(self, u: int, v: int) -> bool:
        return _norm_edge(u, v) in self._edge_set()

    def _edge_set(self) -> frozenset[Edge]:
        cached = getattr(self, "_edges_frozen", None)
        if cached is None:
            cached = frozenset(self.edges)
            self._edges_frozen = cached
        return cached

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, StaticGraph)
            and self.n == other.n
            and self.edges == other.edges
        )

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def __repr__(self) -> str:
        return f"StaticGraph(n={self.n}, m={self.m})"


def _connected(n: int, edges: Sequence[Edge]) -> bool:
    if n == 1:
        return True
    adj: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {1}
    queue = deque([1])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == n


def make_line(n: int) -> StaticGraph:
    """Path 1-2-...-n; diameter n-1."""
    if n < 2:
        raise GraphError(f"line graph needs n >= 2, got {n}")
    return StaticGraph(n, [(i, i + 1) for i in range(1, n)], validate=False)


def make_ring(n: int) -> StaticGraph:
    """Cycle on 1..n."""
    if n < 3:
        raise GraphError(f"ring needs n >= 3, got {n}")
    edges = [(i, i + 1) for i in range(1, n)] + [(1, n)]
    return StaticGraph(n, edges, validate=False)


def make_complete(n: int) -> StaticGraph:
    if n < 3:
        raise GraphError(f"complete graph generator needs n >= 3, got {n}")
    edges = [(u, v) for u in range(1, n + 1) for v in range(u + 1, n + 1)]
    return StaticGraph(n, edges, validate=False)


def make_random_connected(n: int, target_edges: int, seed: int) -> StaticGraph:
    """Random spanning tree plus uniformly sampled extra edges.

    Deterministic for fixed (n, target_edges, seed).
    """
    lo, hi = n - 1, n * (n - 1) // 2
    if not lo <= target_edges <= hi:
        raise GraphError(
            f"target_edges={target_edges} infeasible for n={n} (need {lo}..{hi})"
        )
    rng = random.Random(seed)
    order = list(range(1, n + 1))
    rng.shuffle(order)
    tree = set()
    for i in range(1, n):
        parent = order[rng.randrange(i)]
        tree.add(_norm_edge(order[i], parent))
    extra_needed = target_edges - len(tree)
    if extra_needed:
        candidates = [
            (u, v)
            for u in range(1, n + 1)
            for v in range(u + 1, n + 1)
            if (u, v) not in tree
        ]
        tree.update(rng.sample(candidates, extra_needed))
    return StaticGraph(n, tree, validate=False)


class DensityClass:
    SPARSE = "sparse"
    DENSE = "dense"


def density_threshold(n: int) -> float:
    """Edge-count threshold n*log2(n) separating sparse from dense."""
    return n * math.log2(n) if n > 1 else 0.0


def classify_density(g: StaticGraph) -> str:
    """Sparse iff |E| < n*log2(n), else dense."""
    return DensityClass.SPARSE if g.m < density_threshold(g.n) else DensityClass.DENSE


def diameter(g: StaticGraph) -> int:
    """Maximum over all pairs of the shortest hop distance."""
    best = 0
    for src in g.nodes():
        dist = {src: 0}
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for w in g.adjacency[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        best = max(best, max(dist.values()))
    return best


def eccentricity(g: StaticGraph, src: int) -> int:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return max(dist.values())


class EdgeSchedule:
    """Periodic time-varying edge set with the D-window union invariant:
    for every slot t, the union of edges over [t, t+D) is connected."""

    def __init__(self, n: int, window: int, slots: Sequence[Sequence[Edge]]):
        if n < 2:
            raise GraphError(f"schedule needs n >= 2, got {n}")
        if window < 1:
            raise GraphError(f"window must be >= 1, got {window}")
        self.n = n
        self.window = window
        self.slots: tuple[tuple[Edge, ...], ...] = tuple(
            tuple(sorted(_norm_edge(u, v) for u, v in slot)) for slot in slots
        )
        if not self.slots:
            raise GraphError("schedule needs at least one slot")
        self._neighbor_cache: dict[int, dict[int, tuple[int, ...]]] = {}

    @property
    def period(self) -> int:
        return len(self.slots)

    def edges_at(self, t: int) -> tuple[Edge, ...]:
        return self.slots[t % self.period]

    def neighbors(self, v: int, t: int) -> tuple[int, ...]:
        idx = t % self.period
        cache = self._neighbor_cache.get(idx)
        if cache is None:
            adj: dict[int, list[int]] = {u: [] for u in range(1, self.n + 1)}
            for a, b in self.slots[idx]:
                adj[a].append(b)
                adj[b].append(a)
            cache = {u: tuple(sorted(nbrs)) for u, nbrs in adj.items()}
            self._neighbor_cache[idx] = cache
        return cache[v]

    def window_union(self, t: int) -> tuple[Edge, ...]:
        union: set[Edge] = set()
        for k in range(self.window):
            union.update(self.edges_at(t + k))
        return tuple(sorted(union))

    def windows_all_connected(self) -> bool:
        return all(
            _connected(self.n, self.window_union(t)) for t in range(self.period)
        )

    def base_union(self) -> StaticGraph:
        """Union over one full period (the underlying static graph)."""
        union: set[Edge] = set()
        for slot in self.slots:
            union.update(slot)
        return StaticGraph(self.n, union)

    def __repr__(self) -> str:
        return f"EdgeSchedule(n={self.n}, D={self.window}, period={self.period})"


def make_d_connected_schedule(n: int, window: int, seed: int) -> EdgeSchedule:
    """Partition a connected base graph's edges round-robin across D slots.

    Period equals D, so any D consecutive slots cover every slot once and
    their union is the (connected) base graph.
    """
    if n < 2:
        raise GraphError(f"schedule needs n >= 2, got {n}")
    if window < 1:
        raise GraphError(f"window must be >= 1, got {window}")
    base = make_ring(n) if n >= 3 else make_line(n)
    rng = random.Random(seed)
    edges = list(base.edges)
    rng.shuffle(edges)
    slots: list[list[Edge]] = [[] for _ in range(window)]
    for i, e in enumerate(edges):
        slots[i % window].append(e)
    return EdgeSchedule(n, window, slots)


def schedule_from_static(g: StaticGraph) -> EdgeSchedule:
    """Degenerate D=1 schedule equal to a static graph in every slot."""
    return EdgeSchedule(g.n, 1, [g.edges])


# Edge weights for spanning-tree protocols: (value, (min uid, max uid))
# compared lexicographically, so weights are always pairwise distinct.
Weight = tuple[float, Edge]


def uid_pair_weights(g: StaticGraph, values: dict[Edge, float] | None = None) -> dict[Edge, Weight]:
    """Weight map with ties broken by the UID pair; default value is 1.0."""
    out: dict[Edge, Weight] = {}
    for e in g.edges:
        v = values.get(e, 1.0) if values else 1.0
        out[e] = (v, e)
    return out


def random_weights(g: StaticGraph, seed: int) -> dict[Edge, Weight]:
    rng = random.Random(seed)
    return uid_pair_weights(g, {e: rng.random() for e in g.edges})


# ---------------------------------------------------------------------------
# Plain-text exchange formats.
#   Graph:    first line "n m", then one "u v" line per edge (1-indexed).
#   Schedule: first line "n D P", then one "slot u v" line per edge.
# ---------------------------------------------------------------------------


def dump_graph(g: StaticGraph) -> str:
    lines = [f"{g.n} {g.m}"]
    lines += [f"{u} {v}" for u, v in g.edges]
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> StaticGraph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    n, m = int(rows[0][0]), int(rows[0][1])
    edges = [(int(u), int(v)) for u, v in rows[1:]]
    if len(edges) != m:
        raise GraphError(f"header says {m} edges, found {len(edges)}")
    return StaticGraph(n, edges)


def dump_schedule(s: EdgeSchedule) -> str:
    lines = [f"{s.n} {s.window} {s.period}"]
    for idx, slot in enumerate(s.slots):
        lines += [f"{idx} {u} {v}" for u, v in slot]
    return "\n".join(lines) + "\n"


def load_schedule(text: str) -> EdgeSchedule:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    n, window, period = (int(x) for x in rows[0])
    slots: list[list[Edge]] = [[] for _ in range(period)]
    for slot, u, v in rows[1:]:
        slots[int(slot)].append((int(u), int(v)))
    return EdgeSchedule(n, window, slots)
