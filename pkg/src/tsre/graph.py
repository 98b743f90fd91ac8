"""Interaction graphs carrying bond and field strength functions.

Vertices are labelled 1..N. An edge is stored as an ordered pair ``(j, k)``;
the order fixes the orientation of its bond matrix (the coupling reads
``sigma_j . A sigma_k``) but two edges on the same vertex pair are rejected.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, InvalidSizeError, TopologyError

__all__ = [
    "InteractionGraph",
    "TopologyReport",
    "build_chain",
    "build_ring",
    "build_graph",
    "graph_from_config",
    "cycle_rank",
    "parameter_count",
    "topology_report",
]


def _as_strengths(value, count: int, what: str) -> tuple[float, ...]:
    if np.isscalar(value):
        out = (float(value),) * count
    else:
        out = tuple(float(v) for v in value)
    if len(out) != count:
        raise TopologyError(f"{what} needs {count} entries, got {len(out)}")
    if any(not np.isfinite(v) or v < 0 for v in out):
        raise TopologyError(f"{what} must be finite and non-negative")
    return out


@dataclass(frozen=True)
class InteractionGraph:
    """Connected undirected graph with strength functions.

    Attributes
    ----------
    n : int
        Number of vertices N.
    edges : tuple of (int, int)
        1-based vertex pairs, length M.
    mu : tuple of float
        Average bond strength per edge, aligned with ``edges``.
    lam : tuple of float
        Average field strength per vertex, ``lam[j - 1]`` for vertex j.
    kind : str
        ``"chain"``, ``"ring"`` or ``"custom"``; informational only.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    mu: tuple[float, ...]
    lam: tuple[float, ...]
    kind: str = "custom"

    def __post_init__(self):
        if int(self.n) < 1:
            raise InvalidSizeError("graph needs at least one vertex")
        object.__setattr__(self, "n", int(self.n))
        edges = tuple((int(j), int(k)) for j, k in self.edges)
        seen = set()
        for j, k in edges:
            if j == k:
                raise TopologyError(f"self-loop at vertex {j}")
            if not (1 <= j <= self.n and 1 <= k <= self.n):
                raise TopologyError(f"edge ({j}, {k}) outside vertex range 1..{self.n}")
            key = frozenset((j, k))
            if key in seen:
                raise TopologyError(f"duplicate edge ({j}, {k})")
            seen.add(key)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "mu", _as_strengths(self.mu, len(edges), "mu"))
        object.__setattr__(self, "lam", _as_strengths(self.lam, self.n, "lambda"))
        if not self._connected():
            raise TopologyError("interaction graph must be connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    def adjacency(self) -> dict[int, list[tuple[int, int]]]:
        """Map vertex -> list of (neighbour, edge index)."""
        adj: dict[int, list[tuple[int, int]]] = {v: [] for v in range(1, self.n + 1)}
        for e, (j, k) in enumerate(self.edges):
            adj[j].append((k, e))
            adj[k].append((j, e))
        return adj

    def degrees(self) -> list[int]:
        deg = [0] * self.n
        for j, k in self.edges:
            deg[j - 1] += 1
            deg[k - 1] += 1
        return deg

    def _connected(self) -> bool:
        adj = self.adjacency()
        seen = {1}
        queue = deque([1])
        while queue:
            v = queue.popleft()
            for w, _ in adj[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return len(seen) == self.n

    def is_tree(self) -> bool:
        return self.m == self.n - 1

    def is_ring(self) -> bool:
        return self.n >= 3 and self.m == self.n and all(d == 2 for d in self.degrees())

    def is_chain(self) -> bool:
        """True for the path 1-2-...-N with edges stored in order."""
        return self.edges == tuple((j, j + 1) for j in range(1, self.n))

    def with_strengths(self, mu=None, lam=None) -> "InteractionGraph":
        return InteractionGraph(
            self.n,
            self.edges,
            self.mu if mu is None else mu,
            self.lam if lam is None else lam,
            self.kind,
        )

    def with_edge(self, edge: tuple[int, int], mu: float = 1.0) -> "InteractionGraph":
        return InteractionGraph(self.n, self.edges + (edge,), self.mu + (mu,), self.lam, "custom")

    def to_config(self) -> dict:
        cfg = {"type": self.kind, "n": self.n, "mu": list(self.mu), "lambda": list(self.lam)}
        if self.kind == "custom":
            cfg["edges"] = [list(e) for e in self.edges]
        return cfg


@dataclass(frozen=True)
class TopologyReport:
    n_vertices: int
    n_edges: int
    cycle_rank: int
    parameter_count: int


def build_chain(n: int, mu_const: float = 1.0, lambda_const: float = 0.0) -> InteractionGraph:
    """Open chain 1-2-...-N with constant strengths."""
    if n < 2:
        raise InvalidSizeError(f"a chain needs N >= 2, got {n}")
    edges = tuple((j, j + 1) for j in range(1, n))
    return InteractionGraph(n, edges, mu_const, lambda_const, "chain")


def build_ring(n: int, mu_const: float = 1.0, lambda_const: float = 0.0) -> InteractionGraph:
    """Chain plus the closing edge (N, 1), stored last."""
    if n < 3:
        raise InvalidSizeError(f"a ring needs N >= 3, got {n}")
    edges = tuple((j, j + 1) for j in range(1, n)) + ((n, 1),)
    return InteractionGraph(n, edges, mu_const, lambda_const, "ring")


def build_graph(n: int, edges: Iterable[Sequence[int]], mu=1.0, lam=0.0) -> InteractionGraph:
    return InteractionGraph(n, tuple(tuple(e) for e in edges), mu, lam, "custom")


def graph_from_config(cfg: dict) -> InteractionGraph:
    """Build a graph from its JSON description.

    ``{"type": "chain"|"ring"|"custom", "n": int, "mu": number|[per-edge],
    "lambda": number|[per-vertex], "edges": [[j, k], ...]}``; ``edges`` is
    read only for ``custom``.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("graph config must be a JSON object")
    kind = cfg.get("type", "chain")
    try:
        n = int(cfg["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("graph config needs an integer 'n'") from exc
    mu = cfg.get("mu", 1.0)
    lam = cfg.get("lambda", 0.0)
    if kind == "chain":
        g = build_chain(n)
    elif kind == "ring":
        g = build_ring(n)
    elif kind == "custom":
        if "edges" not in cfg:
            raise ConfigError("custom graph config needs 'edges'")
        return build_graph(n, cfg["edges"], mu, lam)
    else:
        raise ConfigError(f"unknown graph type {kind!r}")
    return g.with_strengths(mu=mu, lam=lam)


def cycle_rank(g: InteractionGraph) -> int:
    """Number of independent cycles, M - N + 1."""
    if not g._connected():
        raise TopologyError("cycle rank is defined here for connected graphs only")
    return g.m - g.n + 1


def parameter_count(g: InteractionGraph) -> int:
    """Gauge-reduced parameter count K = 6M + 3N + 3L - 3."""
    return 6 * g.m + 3 * g.n + 3 * cycle_rank(g) - 3


def topology_report(g: InteractionGraph) -> TopologyReport:
    return TopologyReport(g.n, g.m, cycle_rank(g), parameter_count(g))


def bfs_edge_order(g: InteractionGraph, root_edge: int, skip: Iterable[int] = ()) -> list[tuple[int, int, int]]:
    """Spanning traversal starting from ``root_edge``.

    Returns ``(edge index, known vertex, new vertex)`` triples in the order
    the vertices are reached; the root edge comes first with its stored
    orientation. Edges in ``skip`` are never traversed.
    """
    skip = set(skip)
    adj = g.adjacency()
    j, k = g.edges[root_edge]
    order = [(root_edge, j, k)]
    seen = {j, k}
    queue = deque([j, k])
    while queue:
        v = queue.popleft()
        for w, e in sorted(adj[v]):
            if e in skip or e == root_edge or w in seen:
                continue
            seen.add(w)
            order.append((e, v, w))
            queue.append(w)
    return order
