"""Undirected simple graphs over vertices 0..d-1.

Graphs are immutable after construction and safe to share between
concurrent fits.  Vertex indices are 0-based everywhere in the API; the
edge-list text format uses 1-based labels and is converted at the
boundary.
"""

from __future__ import annotations

import io
from typing import Iterable, Sequence

import numpy as np

from .errors import GraphFormatError

__all__ = [
    "Graph",
    "cliques",
    "core_numbers",
    "max_coreness",
    "gen_grid",
    "gen_random_density",
    "gen_tree_plus",
    "read_edge_list",
    "write_edge_list",
]


class Graph:
    """Undirected simple graph: vertex count plus a set of edges.

    Parameters
    ----------
    d : int
        Number of vertices (positive).
    edges : iterable of (u, v) pairs
        Unordered vertex pairs with 0 <= u != v < d.  Duplicates are
        rejected.
    """

    __slots__ = ("d", "edges", "adj", "_adj_sets", "adj_indptr", "adj_indices")

    def __init__(self, d: int, edges: Iterable[tuple[int, int]]):
        d = int(d)
        if d < 1:
            raise ValueError("vertex count must be positive")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < d and 0 <= v < d):
                raise ValueError(f"edge ({u},{v}) out of range for d={d}")
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            e = (u, v) if u < v else (v, u)
            if e in canon:
                raise ValueError(f"duplicate edge {e}")
            canon.add(e)
        self.d = d
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(canon))

        nbrs: list[list[int]] = [[] for _ in range(d)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        self.adj: tuple[np.ndarray, ...] = tuple(
            np.array(sorted(ns), dtype=np.intp) for ns in nbrs)
        self._adj_sets = tuple(frozenset(ns) for ns in nbrs)

        # CSR form consumed by the update kernels.
        degs = np.array([len(a) for a in self.adj], dtype=np.int32)
        self.adj_indptr = np.zeros(d + 1, dtype=np.int32)
        np.cumsum(degs, out=self.adj_indptr[1:])
        self.adj_indices = (np.concatenate(self.adj).astype(np.int32)
                            if self.edges else np.zeros(0, dtype=np.int32))
        for a in (self.adj_indptr, self.adj_indices):
            a.flags.writeable = False

    # -- queries ---------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, u: int) -> int:
        return len(self.adj[self._check(u)])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj_sets[self._check(u)]

    def boundary(self, u: int) -> np.ndarray:
        """Neighbours of u, ascending."""
        return self.adj[self._check(u)]

    def rest(self, u: int) -> np.ndarray:
        """Vertices outside u and its neighbourhood, ascending.

        {u}, boundary(u) and rest(u) partition the vertex set.
        """
        u = self._check(u)
        mask = np.ones(self.d, dtype=bool)
        mask[u] = False
        mask[self.adj[u]] = False
        return np.flatnonzero(mask)

    def is_complete(self, vertices: Sequence[int]) -> bool:
        vs = list(vertices)
        return all(self.has_edge(vs[i], vs[j])
                   for i in range(len(vs)) for j in range(i + 1, len(vs)))

    def _check(self, u: int) -> int:
        u = int(u)
        if not 0 <= u < self.d:
            raise IndexError(f"vertex {u} out of range for d={self.d}")
        return u

    # -- misc ------------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.d == other.d and self.edges == other.edges

    def __hash__(self):
        return hash((self.d, self.edges))

    def __repr__(self):
        return f"Graph(d={self.d}, edges={self.num_edges})"


def cliques(g: Graph) -> list[tuple[int, ...]]:
    """All maximal cliques, each sorted ascending, lexicographic order.

    Uses Bron-Kerbosch branch and bound with pivoting.  Isolated
    vertices appear as singleton cliques, so every vertex and every edge
    of the graph is covered by the output.  Worst case is exponential in
    the vertex count.
    """
    adj = g._adj_sets
    out: list[tuple[int, ...]] = []

    def expand(clique: list[int], cand: set, excl: set):
        if not cand and not excl:
            out.append(tuple(sorted(clique)))
            return
        pivot = max(cand | excl, key=lambda w: len(cand & adj[w]))
        for v in sorted(cand - adj[pivot]):
            expand(clique + [v], cand & adj[v], excl & adj[v])
            cand.remove(v)
            excl.add(v)

    expand([], set(range(g.d)), set())
    return sorted(out)


def core_numbers(g: Graph) -> np.ndarray:
    """Core number of every vertex, by minimum-degree peeling.

    The core number of v is the largest k such that v survives repeated
    removal of all vertices of degree < k.  Linear-time bucket variant
    of the peeling algorithm.
    """
    d = g.d
    deg = np.array([g.degree(u) for u in range(d)], dtype=np.intp)
    order = np.argsort(deg, kind="stable")
    pos = np.empty(d, dtype=np.intp)
    pos[order] = np.arange(d)
    # bin_start[k] = first position in `order` with degree >= k
    maxdeg = int(deg.max())
    bin_start = np.zeros(maxdeg + 2, dtype=np.intp)
    np.cumsum(np.bincount(deg, minlength=maxdeg + 1), out=bin_start[1:])
    core = deg.copy()
    for i in range(d):
        u = order[i]
        for v in g.adj[u]:
            if core[v] > core[u]:
                # swap v to the front of its bin, then shrink its degree
                dv = core[v]
                front = bin_start[dv]
                w = order[front]
                if v != w:
                    order[front], order[pos[v]] = v, w
                    pos[w], pos[v] = pos[v], front
                bin_start[dv] += 1
                core[v] -= 1
    return core


def max_coreness(g: Graph) -> int:
    """Largest core number over all vertices."""
    return int(core_numbers(g).max())


# -- benchmark graph generators ------------------------------------------
#
# All generators draw from numpy's default PCG64 generator seeded with the
# given integer, visiting candidate pairs (u, v), u < v, in lexicographic
# order, so the same (parameters, seed) always yields the same edge set on
# the same numpy version.


def gen_grid(rows: int, cols: int) -> Graph:
    """Rectangular lattice with nearest-neighbour edges.

    Vertex (r, c) gets index r * cols + c.
    """
    rows, cols = int(rows), int(cols)
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph(rows * cols, edges)


def _bernoulli_pairs(d, p, rng, exclude=frozenset()):
    edges = []
    for u in range(d - 1):
        hits = np.flatnonzero(rng.random(d - 1 - u) < p)
        for k in hits:
            e = (u, u + 1 + int(k))
            if e not in exclude:
                edges.append(e)
    return edges


def gen_random_density(d: int, density: float, seed: int) -> Graph:
    """Random graph: every pair kept independently with the given
    probability."""
    d = int(d)
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return Graph(d, _bernoulli_pairs(d, density, rng))


def gen_tree_plus(d: int, extra_density: float, seed: int) -> Graph:
    """Uniform random labelled spanning tree plus independent extra edges.

    The tree is decoded from a uniform Pruefer sequence; every non-tree
    pair is then added with probability ``extra_density``.
    """
    d = int(d)
    if d < 1:
        raise ValueError("vertex count must be positive")
    if not 0.0 <= extra_density <= 1.0:
        raise ValueError("extra_density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    tree: list[tuple[int, int]] = []
    if d >= 2:
        seq = rng.integers(0, d, size=d - 2)
        tree = _decode_pruefer(d, seq)
    tree_set = frozenset(tree)
    extra = _bernoulli_pairs(d, extra_density, rng, exclude=tree_set)
    return Graph(d, list(tree_set) + extra)


def _decode_pruefer(d, seq):
    """Linear-time pointer decoding of a Pruefer sequence (d >= 2)."""
    degree = np.ones(d, dtype=np.intp)
    for v in seq:
        degree[v] += 1
    ptr = 0
    while degree[ptr] != 1:
        ptr += 1
    leaf = ptr
    edges = []
    for v in seq:
        v = int(v)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[v] -= 1
        if degree[v] == 1 and v < ptr:
            leaf = v
        else:
            ptr += 1
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
    edges.append((leaf, d - 1))
    return edges


# -- edge-list text format -------------------------------------------------
#
#   # optional comments
#   d <vertexcount>
#   u v            (1-based labels, whitespace separated)


def read_edge_list(source) -> Graph:
    """Parse a graph from a path or text file object."""
    if hasattr(source, "read"):
        return _parse_edge_list(source, getattr(source, "name", "<stream>"))
    with open(source, "r", encoding="utf-8") as fh:
        return _parse_edge_list(fh, source)


def _parse_edge_list(fh, path) -> Graph:
    d = None
    edges = []
    for lineno, raw in enumerate(fh, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if d is None:
            if len(parts) != 2 or parts[0] != "d":
                raise GraphFormatError(path, lineno,
                                       "expected header 'd <vertexcount>'")
            try:
                d = int(parts[1])
            except ValueError:
                raise GraphFormatError(path, lineno,
                                       f"bad vertex count {parts[1]!r}") from None
            continue
        if len(parts) != 2:
            raise GraphFormatError(path, lineno, f"expected 'u v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(path, lineno,
                                   f"non-integer vertex in {line!r}") from None
        if not (1 <= u <= d and 1 <= v <= d):
            raise GraphFormatError(path, lineno,
                                   f"vertex out of range 1..{d} in {line!r}")
        edges.append((u - 1, v - 1))
    if d is None:
        raise GraphFormatError(path, 0, "empty graph file")
    try:
        return Graph(d, edges)
    except ValueError as exc:
        raise GraphFormatError(path, 0, str(exc)) from None


def write_edge_list(g: Graph, target) -> None:
    """Write a graph in the 1-based edge-list format."""
    if hasattr(target, "write"):
        _emit_edge_list(g, target)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            _emit_edge_list(g, fh)


def _emit_edge_list(g: Graph, fh: io.TextIOBase) -> None:
    fh.write(f"d {g.d}\n")
    for u, v in g.edges:
        fh.write(f"{u + 1} {v + 1}\n")
