"""Pre-flight existence diagnostics and the decomposable closed form.

The core rule is sufficient only: a fit is guaranteed to have a maximum
likelihood estimate when the rank budget of the data exceeds the maximal
coreness of the graph, or when the graph is decomposable with cliques no
larger than the rank budget.  No "does not exist" verdict is ever
returned.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from . import numkernel as nk
from .errors import LocalMarginalSingular, NotDecomposable, NotPositiveDefinite
from .graph import Graph, core_numbers
from .likelihood import SampleStats

__all__ = [
    "ExistenceVerdict",
    "check_existence",
    "decomposable_mle",
    "is_decomposable",
    "mcs_order",
    "perfect_cliques",
]

GUARANTEED = "guaranteed_exists"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class ExistenceVerdict:
    max_coreness: int
    #: smallest sample size for which the core rule applies without
    #: centering (rank budget must exceed the coreness).
    n_required_core_rule: int
    decomposable: bool
    max_clique_size: int | None
    rank_budget: int
    verdict: str
    #: None when no planarity test is available.
    planar: bool | None = None

    def to_dict(self) -> dict:
        return {
            "max_coreness": self.max_coreness,
            "n_required_core_rule": self.n_required_core_rule,
            "decomposable": self.decomposable,
            "max_clique_size": self.max_clique_size,
            "rank_budget": self.rank_budget,
            "planar": self.planar,
            "verdict": self.verdict,
        }


def mcs_order(g: Graph) -> list[int]:
    """Maximum cardinality search visit order.

    Lazy-heap implementation; ties broken towards the smallest vertex,
    so the order is deterministic.
    """
    d = g.d
    weight = [0] * d
    visited = [False] * d
    heap = [(0, v) for v in range(d)]
    order: list[int] = []
    while heap:
        negw, u = heapq.heappop(heap)
        if visited[u] or -negw != weight[u]:
            continue
        visited[u] = True
        order.append(u)
        for w in g.adj[u]:
            if not visited[w]:
                weight[w] += 1
                heapq.heappush(heap, (-weight[w], int(w)))
    return order


def is_decomposable(g: Graph) -> bool:
    """Chordality test: run MCS and check each vertex's earlier
    neighbours against its most recently visited one."""
    return _mcs_check(g)[1]


def _mcs_check(g: Graph):
    order = mcs_order(g)
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        earlier = [w for w in g.adj[v] if pos[w] < pos[v]]
        if not earlier:
            continue
        u = max(earlier, key=pos.get)
        if any(w != u and not g.has_edge(u, w) for w in earlier):
            return order, False
    return order, True


def perfect_cliques(g: Graph):
    """Cliques of a decomposable graph in a perfect sequence, plus the
    separator multiset.

    Returns (cliques, separators) where cliques is a list of ascending
    vertex tuples whose order satisfies the running intersection
    property, and separators lists (separator tuple, multiplicity)
    pairs.  Empty separators from disconnected components are included
    with their multiplicity.
    """
    order, chordal = _mcs_check(g)
    if not chordal:
        raise NotDecomposable("graph has a chordless cycle of length >= 4")
    pos = {v: i for i, v in enumerate(order)}
    cliques: list[tuple[int, ...]] = []
    seps: dict[tuple[int, ...], int] = {}
    prev_weight = -1
    for v in order:
        earlier = sorted((w for w in g.adj[v] if pos[w] < pos[v]),
                         key=pos.get)
        if len(earlier) <= prev_weight:
            # previous clique is complete; v starts a new one and the
            # earlier neighbours form its separator
            sep = tuple(sorted(earlier))
            seps[sep] = seps.get(sep, 0) + 1
            cliques.append(tuple(sorted(earlier + [v])))
        elif cliques:
            cliques[-1] = tuple(sorted(cliques[-1] + (v,)))
        else:
            cliques.append((v,))
        prev_weight = len(earlier)
    return cliques, sorted(seps.items())


def decomposable_mle(stats: SampleStats, g: Graph) -> np.ndarray:
    """Closed-form maximum likelihood concentration matrix for a
    decomposable graph.

    Sums the padded inverses of the clique marginals of S and subtracts
    the padded inverses of the separator marginals with their
    multiplicities.  The result has the graph's zero pattern, is
    positive definite, and its inverse matches S on the diagonal and all
    edges.
    """
    cliques, seps = perfect_cliques(g)
    d = stats.d
    if g.d != d:
        raise ValueError("graph and covariance orders do not match")
    K = np.zeros((d, d))
    for cl in cliques:
        idx = np.asarray(cl, dtype=np.intp)
        block = stats.S[np.ix_(idx, idx)]
        try:
            K[np.ix_(idx, idx)] += nk.pd_inverse(block)
        except NotPositiveDefinite:
            raise LocalMarginalSingular(cl) from None
    for sep, mult in seps:
        if not sep:
            continue
        idx = np.asarray(sep, dtype=np.intp)
        block = stats.S[np.ix_(idx, idx)]
        try:
            K[np.ix_(idx, idx)] -= mult * nk.pd_inverse(block)
        except NotPositiveDefinite:
            raise LocalMarginalSingular(sep) from None
    return (K + K.T) / 2.0


def _planarity(g: Graph):
    """Planarity via networkx when available, else None."""
    try:
        import networkx as nx
    except ImportError:
        return None
    ng = nx.Graph()
    ng.add_nodes_from(range(g.d))
    ng.add_edges_from(g.edges)
    return bool(nx.check_planarity(ng)[0])


def check_existence(g: Graph, stats: SampleStats) -> ExistenceVerdict:
    """Sufficient-condition gate run before the estimation algorithms.

    GuaranteedExists when the rank budget exceeds the maximal coreness,
    when the graph is decomposable with max clique size within budget,
    or (when a planarity test is available) when the graph is planar and
    the budget is at least 4.  Otherwise Unknown.
    """
    coreness = int(core_numbers(g).max()) if g.d else 0
    budget = stats.rank_budget
    decomposable = is_decomposable(g)
    max_clique = None
    if decomposable:
        cliques, _ = perfect_cliques(g)
        max_clique = max(len(c) for c in cliques)
    verdict = UNKNOWN
    if budget > coreness:
        verdict = GUARANTEED
    if decomposable and max_clique is not None and max_clique <= budget:
        verdict = GUARANTEED
    planar = None
    if verdict == UNKNOWN:
        planar = _planarity(g)
        if planar and budget >= 4:
            verdict = GUARANTEED
    return ExistenceVerdict(
        max_coreness=coreness,
        n_required_core_rule=coreness + 2,
        decomposable=decomposable,
        max_clique_size=max_clique,
        rank_budget=budget,
        verdict=verdict,
        planar=planar,
    )
