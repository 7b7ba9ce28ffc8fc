"""Component structure and distance observables of a graph.

Components are ranked by decreasing size, ties going to the component with
the smallest vertex id.  Ranks ``j`` are 1-based (``C_1`` is the largest) in
every function that takes a rank; arrays such as ``sizes`` are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numba as nb
import numpy as np

from . import _kernels as K
from .graphs import Graph


@dataclass(frozen=True, eq=False)
class ComponentDecomposition:
    n: int
    labels: np.ndarray  # rank (0-based) of the component of each vertex
    sizes: np.ndarray  # non-increasing
    order: np.ndarray  # vertices grouped by component, ascending inside a group
    offsets: np.ndarray  # group boundaries into ``order``

    @property
    def count(self) -> int:
        return int(self.sizes.size)

    def members(self, j: int) -> np.ndarray:
        """Vertices of ``C_j`` (1-based rank)."""
        if not (1 <= j <= self.count):
            raise IndexError(f"component rank {j} out of range 1..{self.count}")
        return self.order[self.offsets[j - 1]:self.offsets[j]]

    @cached_property
    def components(self) -> list[np.ndarray]:
        return [self.order[self.offsets[i]:self.offsets[i + 1]] for i in range(self.count)]


def components(g: Graph) -> ComponentDecomposition:
    ids, count = K.union_find_labels(g.n, g.edges[:, 0], g.edges[:, 1])
    sizes_by_id = np.bincount(ids, minlength=count)
    # ids follow smallest-vertex order, so a stable sort breaks ties correctly
    rank_to_id = np.argsort(-sizes_by_id, kind="stable")
    id_to_rank = np.empty(count, dtype=np.int64)
    id_to_rank[rank_to_id] = np.arange(count)
    labels = id_to_rank[ids]
    sizes = sizes_by_id[rank_to_id]
    order = np.argsort(labels, kind="stable")
    offsets = np.zeros(count + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    return ComponentDecomposition(g.n, labels, sizes, order, offsets)


@dataclass(frozen=True)
class SizeVector:
    """Rescaled component sizes, implicitly padded with zeros."""

    entries: np.ndarray
    scale: float

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if np.any(e < 0) or np.any(np.diff(e) > 0):
            raise ValueError("entries must be nonnegative and non-increasing")
        object.__setattr__(self, "entries", e)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.entries**2)))


def size_vector(decomp: ComponentDecomposition) -> SizeVector:
    scale = decomp.n ** (2.0 / 3.0)
    return SizeVector(decomp.sizes / scale, scale)


def l2_distance(a: SizeVector, b: SizeVector) -> float:
    x, y = a.entries, b.entries
    m = max(x.size, y.size)
    d = np.zeros(m)
    d[:x.size] += x
    d[:y.size] -= y
    return float(np.sqrt(np.dot(d, d)))


def susceptibility(decomp: ComponentDecomposition, r: int) -> int:
    """Exact ``sum_i |C_i|^r``."""
    if r < 1:
        raise ValueError("r must be >= 1")
    values, counts = np.unique(decomp.sizes, return_counts=True)
    return sum(int(c) * int(v) ** r for v, c in zip(values, counts))


@dataclass(frozen=True)
class DistanceStats:
    z_total: int
    z_per_component: np.ndarray
    u_per_component: np.ndarray
    diameters: np.ndarray
    d_max: int


def distance_stats(g: Graph, decomp: ComponentDecomposition, ranks=None) -> DistanceStats:
    """BFS from every vertex of the chosen components (default: all).

    ``Z_i`` sums the distance over ordered pairs ``(u, v)`` of ``C_i``,
    diagonal included, so ``u_i = Z_i / |C_i|^2`` is the mean distance of two
    independent uniform vertices.
    """
    indptr, indices = g.csr
    if ranks is None:
        comp_ids = np.arange(decomp.count, dtype=np.int64)
    else:
        comp_ids = np.asarray(ranks, dtype=np.int64) - 1
    z, diam = K.component_distance_sums(indptr, indices, decomp.order, decomp.offsets, comp_ids)
    s = decomp.sizes[comp_ids].astype(float)
    return DistanceStats(
        z_total=int(z.sum()),
        z_per_component=z,
        u_per_component=z / (s * s),
        diameters=diam,
        d_max=int(diam.max()) if diam.size else 0,
    )


def diameter(g: Graph, decomp: ComponentDecomposition, j: int) -> int:
    return int(distance_stats(g, decomp, ranks=[j]).diameters[0])


def level_sizes(g: Graph, u: int, k_max: int) -> np.ndarray:
    """Number of vertices at distance ``k`` from ``u`` for ``k = 0..k_max``."""
    if not (0 <= u < g.n):
        raise ValueError(f"vertex {u} out of range")
    return level_sizes_many(g, np.array([u]), k_max)[0]


def level_sizes_many(g: Graph, roots, k_max: int) -> np.ndarray:
    indptr, indices = g.csr
    return K.level_sizes_many(indptr, indices, np.asarray(roots, dtype=np.int64), int(k_max))


@nb.njit(cache=True)
def _two_core_mask(indptr, indices):
    n = indptr.shape[0] - 1
    deg = np.empty(n, dtype=np.int64)
    alive = np.ones(n, dtype=np.bool_)
    stack = np.empty(n, dtype=np.int64)
    top = 0
    for v in range(n):
        deg[v] = indptr[v + 1] - indptr[v]
        if deg[v] <= 1:
            alive[v] = False
            stack[top] = v
            top += 1
    while top > 0:
        top -= 1
        v = stack[top]
        for q in range(indptr[v], indptr[v + 1]):
            w = indices[q]
            if alive[w]:
                deg[w] -= 1
                if deg[w] <= 1:
                    alive[w] = False
                    stack[top] = w
                    top += 1
    return alive


def two_core(g: Graph) -> nx.Graph:
    indptr, indices = g.csr
    alive = _two_core_mask(indptr, indices)
    e = g.edges[alive[g.edges[:, 0]] & alive[g.edges[:, 1]]]
    h = nx.Graph()
    h.add_edges_from(map(tuple, e.tolist()))
    return h


def _through_vertex_cycles(h: nx.Graph, s) -> set[int]:
    """Lengths of simple cycles through ``s`` closed by one non-tree edge of a BFS."""
    dist = {s: 0}
    branch = {s: s}
    frontier = [s]
    found = set()
    seen_edges = set()
    while frontier:
        nxt = []
        for u in frontier:
            for w in h.adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    branch[w] = w if u == s else branch[u]
                    seen_edges.add(frozenset((u, w)))
                    nxt.append(w)
                elif frozenset((u, w)) not in seen_edges:
                    seen_edges.add(frozenset((u, w)))
                    if branch[u] != branch[w]:
                        found.add(dist[u] + dist[w] + 1)
        frontier = nxt
    return found


def cycle_lengths(g: Graph, exact_max_vertices: int = 20) -> set[int]:
    """Lengths of cycles found in ``g``.

    Exact for 2-core components that are a single cycle or have at most
    ``exact_max_vertices`` vertices.  Larger 2-core components contribute the
    fundamental cycles of a spanning tree plus, for every vertex, the cycles
    closed by a single non-tree edge of its BFS tree; every reported length
    belongs to a real cycle, but intermediate lengths can be missed.
    """
    core = two_core(g)
    lengths: set[int] = set()
    for comp in nx.connected_components(core):
        h = core.subgraph(comp)
        v, e = h.number_of_nodes(), h.number_of_edges()
        if e - v + 1 == 1:
            lengths.add(v)
        elif v <= exact_max_vertices:
            lengths.update(len(c) for c in nx.simple_cycles(h))
        else:
            lengths.update(len(c) for c in nx.cycle_basis(h))
            for s in h.nodes:
                lengths.update(_through_vertex_cycles(h, s))
    return lengths


def has_cycle_in_range(g: Graph, a: float, b: float, exact_max_vertices: int = 20) -> bool:
    """Whether a cycle of length in the open interval ``(a n^{1/3}, b n^{1/3})`` is found."""
    if not (0 < a < b):
        raise ValueError("need 0 < a < b")
    lo, hi = a * g.n ** (1 / 3), b * g.n ** (1 / 3)
    return any(lo < L < hi for L in cycle_lengths(g, exact_max_vertices))


def subcritical_center(theta: float, n: int) -> float:
    """``(log xi - 5 log log xi) / (-theta - log(1-theta))`` with ``xi = theta^3 n``."""
    if theta <= 0 or theta >= 1:
        raise ValueError("theta must lie in (0, 1)")
    xi = theta**3 * n
    if xi <= math.e:
        raise ValueError(f"need theta^3 n > e, got {xi}")
    rate = -theta - math.log1p(-theta)
    return (math.log(xi) - 5.0 * math.log(math.log(xi))) / rate


def largest_component_stats(decomp: ComponentDecomposition, theta: float) -> tuple[int, float]:
    return int(decomp.sizes[0]) if decomp.count else 0, subcritical_center(theta, decomp.n)


def subcritical_diameter_bound(theta: float, n: int, slack: float = 10.0) -> float:
    return (math.log(theta**3 * n) + slack) / -math.log1p(-theta)
