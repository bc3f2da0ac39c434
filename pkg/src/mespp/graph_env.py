"""Environment graphs, hop distances and per-searcher reachable states.

Vertices are labeled ``1..n``. Index 0 is never a vertex: the belief and
capture machinery reserve it for the capture state.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class GraphError(ValueError):
    """Base class for malformed environment graphs."""


class InvalidVertexError(GraphError):
    pass


class DisconnectedGraphError(GraphError):
    def __init__(self, u: int, v: int):
        super().__init__(f"graph is disconnected: no path between {u} and {v}")
        self.pair = (u, v)


class GraphParseError(GraphError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Graph:
    """Undirected, simple, connected graph on vertices ``1..n``.

    ``edges`` holds each edge once as ``(u, v)`` with ``u < v``.
    """

    n: int
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphError(f"graph needs at least one vertex, got n={self.n}")
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise InvalidVertexError(f"edge {u}-{v} has an endpoint outside 1..{self.n}")
            if u > v:
                raise GraphError(f"edge {u}-{v} is not normalized (expected u < v)")
        _check_connected(self)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        """Build a graph from an edge list, rejecting self-loops and duplicates."""
        seen: set[tuple[int, int]] = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key[0]}-{key[1]}")
            seen.add(key)
        return cls(n, frozenset(seen))

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        """Sorted open neighborhoods; entry 0 is an empty placeholder."""
        nbrs: list[list[int]] = [[] for _ in range(self.n + 1)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(tuple(sorted(a)) for a in nbrs)

    @cached_property
    def distances(self) -> "DistanceMatrix":
        return all_pairs_distances(self)

    def vertices(self) -> range:
        return range(1, self.n + 1)

    def check_vertex(self, v: int) -> int:
        if not (isinstance(v, (int, np.integer)) and 1 <= v <= self.n):
            raise InvalidVertexError(f"vertex {v!r} outside 1..{self.n}")
        return int(v)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[self.check_vertex(v)]

    def to_text(self) -> str:
        lines = [f"n={self.n}"]
        lines += [f"e {u} {v}" for u, v in sorted(self.edges)]
        return "\n".join(lines) + "\n"


def _bfs(adjacency: tuple[tuple[int, ...], ...], src: int) -> dict[int, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for w in adjacency[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _check_connected(g: Graph) -> None:
    reached = _bfs(g.adjacency, 1)
    if len(reached) != g.n:
        missing = min(v for v in g.vertices() if v not in reached)
        raise DisconnectedGraphError(1, missing)


class DistanceMatrix:
    """All-pairs hop counts, indexed with 1-based vertex labels: ``d[u, v]``."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.matrix.setflags(write=False)

    def __getitem__(self, key: tuple[int, int]) -> int:
        u, v = key
        return int(self.matrix[u - 1, v - 1])

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def eccentricity(self, v: int) -> int:
        return int(self.matrix[v - 1].max())


def build_grid(rows: int, cols: int) -> Graph:
    """4-connected ``rows x cols`` grid, row-major labels starting at 1."""
    if rows < 1 or cols < 1:
        raise GraphError(f"grid dimensions must be positive, got {rows}x{cols}")
    edges = set()
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c + 1
            if c + 1 < cols:
                edges.add((v, v + 1))
            if r + 1 < rows:
                edges.add((v, v + cols))
    return Graph(rows * cols, frozenset(edges))


def build_path(n: int) -> Graph:
    return Graph(n, frozenset((v, v + 1) for v in range(1, n)))


def build_star(leaves: int) -> Graph:
    """Star with center 1 and leaves ``2..leaves+1``."""
    return Graph(leaves + 1, frozenset((1, v) for v in range(2, leaves + 2)))


def grid_coords(v: int, cols: int) -> tuple[int, int]:
    return divmod(v - 1, cols)


def neighbors_closed(g: Graph, v: int) -> frozenset[int]:
    """The closed neighborhood of ``v``: its neighbors plus ``v`` itself."""
    v = g.check_vertex(v)
    return frozenset(g.adjacency[v]) | {v}


def all_pairs_distances(g: Graph) -> DistanceMatrix:
    """Exact hop distances; rejects disconnected graphs."""
    if not g.edges:
        if g.n > 1:
            raise DisconnectedGraphError(1, 2)
        return DistanceMatrix(np.zeros((1, 1), dtype=np.int64))
    rows, cols = zip(*((u - 1, v - 1) for u, v in g.edges))
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(g.n, g.n))
    d = shortest_path(adj, directed=False, unweighted=True)
    if np.isinf(d).any():
        u, v = np.argwhere(np.isinf(d))[0]
        raise DisconnectedGraphError(int(u) + 1, int(v) + 1)
    return DistanceMatrix(d.astype(np.int64))


@dataclass(frozen=True)
class ReachableSet:
    """States ``(v, t)`` a searcher starting at ``start`` can occupy, ``t <= horizon``."""

    start: int
    horizon: int
    by_time: tuple[tuple[int, ...], ...]

    def at(self, t: int) -> tuple[int, ...]:
        return self.by_time[t]

    def times(self, v: int) -> tuple[int, ...]:
        return tuple(t for t in range(self.horizon + 1) if v in self.by_time[t])

    def __contains__(self, state: tuple[int, int]) -> bool:
        v, t = state
        return 0 <= t <= self.horizon and v in self.by_time[t]

    def pairs(self) -> list[tuple[int, int]]:
        return [(v, t) for t in range(self.horizon + 1) for v in self.by_time[t]]

    def __len__(self) -> int:
        return sum(len(vs) for vs in self.by_time)


def reachable_states(g: Graph, start: int, horizon: int) -> ReachableSet:
    start = g.check_vertex(start)
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    d = g.distances.matrix[start - 1]
    by_time = tuple(
        tuple(int(v) + 1 for v in np.flatnonzero(d <= t)) for t in range(horizon + 1)
    )
    return ReachableSet(start, horizon, by_time)


def load_graph(text: str) -> Graph:
    """Parse the line-oriented graph format (``n=<int>`` then ``e <u> <v>`` lines)."""
    n = None
    edges: list[tuple[int, int]] = []
    seen: dict[tuple[int, int], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if n is None:
            key, sep, value = line.partition("=")
            if key.strip() != "n" or not sep:
                raise GraphParseError(lineno, f"expected 'n=<int>' header, got {line!r}")
            try:
                n = int(value)
            except ValueError:
                raise GraphParseError(lineno, f"vertex count is not an integer: {value.strip()!r}") from None
            if n < 1:
                raise GraphParseError(lineno, f"vertex count must be positive, got {n}")
            continue
        tokens = line.split()
        if tokens[0] != "e" or len(tokens) != 3:
            raise GraphParseError(lineno, f"expected 'e <u> <v>', got {line!r}")
        try:
            u, v = int(tokens[1]), int(tokens[2])
        except ValueError:
            raise GraphParseError(lineno, f"edge endpoints must be integers: {line!r}") from None
        if u == v:
            raise GraphParseError(lineno, f"self-loop at vertex {u}")
        if not (1 <= u <= n and 1 <= v <= n):
            raise GraphParseError(lineno, f"edge {u}-{v} has an endpoint outside 1..{n}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphParseError(lineno, f"duplicate edge {u}-{v} (first declared on line {seen[key]})")
        seen[key] = lineno
        edges.append(key)
    if n is None:
        raise GraphParseError(0, "missing 'n=<int>' header")
    return Graph(n, frozenset(edges))
