"""Directed graphs, incidence decomposition and Laplacians.

Edges are ordered pairs ``(source, target)`` with 1-based vertex labels.
Edge ``(i, j)`` points ``i -> j``; the incidence matrix carries ``+1`` at the
source row and ``-1`` at the target row, so that the row sums of the
out-incidence matrix are out-degrees and ``L_o = B_o E^T = D_out - A``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GraphError",
    "Digraph",
    "IncidenceSet",
    "GraphReport",
    "build_incidence",
    "is_balanced",
    "globally_reachable_nodes",
    "is_strongly_connected",
    "graph_report",
    "random_digraph",
    "digraph_from_edges",
]


class GraphError(ValueError):
    """Malformed edge list. ``edge_index`` is 0-based, or None for vertex-count errors."""

    def __init__(self, message: str, edge_index: int | None = None):
        super().__init__(message)
        self.edge_index = edge_index


@dataclass(frozen=True)
class Digraph:
    """A simple directed graph on vertices ``1..n_vertices``."""

    n_vertices: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = self.n_vertices
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise GraphError(f"n_vertices must be a positive integer, got {n!r}")
        object.__setattr__(self, "n_vertices", int(n))
        edges = []
        seen = set()
        for k, e in enumerate(self.edges):
            try:
                s, t = e
            except (TypeError, ValueError):
                raise GraphError(f"edge {k}: expected a (source, target) pair, got {e!r}", k) from None
            if not all(isinstance(v, (int, np.integer)) and not isinstance(v, bool) for v in (s, t)):
                raise GraphError(f"edge {k}: vertex labels must be integers, got {e!r}", k)
            s, t = int(s), int(t)
            if not (1 <= s <= n and 1 <= t <= n):
                raise GraphError(f"edge {k}: ({s}, {t}) has an endpoint outside [1, {n}]", k)
            if s == t:
                raise GraphError(f"edge {k}: self-loop at vertex {s}", k)
            if (s, t) in seen:
                raise GraphError(f"edge {k}: duplicate edge ({s}, {t})", k)
            seen.add((s, t))
            edges.append((s, t))
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def out_degrees(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=np.int64)
        for s, _ in self.edges:
            d[s - 1] += 1
        return d

    def in_degrees(self) -> np.ndarray:
        d = np.zeros(self.n_vertices, dtype=np.int64)
        for _, t in self.edges:
            d[t - 1] += 1
        return d

    def to_dict(self) -> dict:
        return {"n_vertices": self.n_vertices, "edges": [list(e) for e in self.edges]}


@dataclass(frozen=True, eq=False)
class IncidenceSet:
    """Integer incidence objects of a digraph.

    Attributes
    ----------
    E : (n, m) int array
        Incidence matrix, ``E = B_o + B_i``.
    B_o, B_i : (n, m) int arrays
        Out-incidence (entries 0/+1) and in-incidence (entries 0/-1).
    L_o, L_i, L : (n, n) int arrays
        ``B_o E^T``, ``-B_i E^T`` and ``E E^T``.
    """

    graph: Digraph
    E: np.ndarray
    B_o: np.ndarray
    B_i: np.ndarray
    L_o: np.ndarray
    L_i: np.ndarray
    L: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.graph.n_vertices

    @property
    def m(self) -> int:
        return self.graph.n_edges


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_incidence(g: Digraph) -> IncidenceSet:
    """Build ``E, B_o, B_i, L_o, L_i, L`` for ``g`` in exact integer arithmetic."""
    n, m = g.n_vertices, g.n_edges
    B_o = np.zeros((n, m), dtype=np.int64)
    B_i = np.zeros((n, m), dtype=np.int64)
    for k, (s, t) in enumerate(g.edges):
        B_o[s - 1, k] = 1
        B_i[t - 1, k] = -1
    E = B_o + B_i
    return IncidenceSet(
        graph=g,
        E=_readonly(E),
        B_o=_readonly(B_o),
        B_i=_readonly(B_i),
        L_o=_readonly(B_o @ E.T),
        L_i=_readonly(-B_i @ E.T),
        L=_readonly(E @ E.T),
    )


def is_balanced(inc: IncidenceSet) -> bool:
    """True iff ``E^T 1 = 0`` and ``E 1 = 0`` (integer arithmetic)."""
    E = inc.E
    return bool(not E.sum(axis=0).any() and not E.sum(axis=1).any())


def _reverse_adjacency(g: Digraph) -> list[list[int]]:
    radj: list[list[int]] = [[] for _ in range(g.n_vertices)]
    for s, t in g.edges:
        radj[t - 1].append(s - 1)
    return radj


def _reverse_reach(radj: Sequence[Sequence[int]], v: int) -> set[int]:
    seen = {v}
    queue = deque([v])
    while queue:
        w = queue.popleft()
        for p in radj[w]:
            if p not in seen:
                seen.add(p)
                queue.append(p)
    return seen


def globally_reachable_nodes(g: Digraph) -> frozenset[int]:
    """Vertices (1-based) reachable by a directed walk from every other vertex.

    A single-vertex graph has its vertex trivially globally reachable.
    """
    radj = _reverse_adjacency(g)
    n = g.n_vertices
    return frozenset(v + 1 for v in range(n) if len(_reverse_reach(radj, v)) == n)


def is_strongly_connected(g: Digraph) -> bool:
    return len(globally_reachable_nodes(g)) == g.n_vertices


@dataclass(frozen=True)
class GraphReport:
    balanced: bool
    globally_reachable_nodes: frozenset[int]
    strongly_connected: bool
    max_out_degree: int
    max_in_degree: int

    def to_dict(self) -> dict:
        return {
            "balanced": self.balanced,
            "globally_reachable_nodes": sorted(self.globally_reachable_nodes),
            "strongly_connected": self.strongly_connected,
            "max_out_degree": self.max_out_degree,
            "max_in_degree": self.max_in_degree,
        }


def graph_report(g: Digraph, inc: IncidenceSet | None = None) -> GraphReport:
    if inc is None:
        inc = build_incidence(g)
    reach = globally_reachable_nodes(g)
    out_deg = inc.B_o.sum(axis=1)
    in_deg = -inc.B_i.sum(axis=1)
    return GraphReport(
        balanced=is_balanced(inc),
        globally_reachable_nodes=reach,
        strongly_connected=len(reach) == g.n_vertices,
        max_out_degree=int(out_deg.max(initial=0)),
        max_in_degree=int(in_deg.max(initial=0)),
    )


def random_digraph(rng: np.random.Generator, n: int, p: float) -> Digraph:
    """Erdos-Renyi digraph: each ordered pair ``i != j`` is an edge with probability ``p``."""
    edges = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j and rng.random() < p]
    return Digraph(n, tuple(edges))


def digraph_from_edges(n_vertices: int, edges: Iterable[Sequence[int]]) -> Digraph:
    return Digraph(n_vertices, tuple(tuple(e) if isinstance(e, (list, tuple)) else e for e in edges))
