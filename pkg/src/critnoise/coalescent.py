"""Weighted random graphs W(x, q), their blow-ups W(x, H, q), and hypothesis checkers.

``W(x, q)`` joins ``i`` and ``j`` independently with probability
``1 - exp(-q x_i x_j)``.  Sampling sorts the weights and, per row, walks the
non-increasing edge probabilities with geometric skips and thinning, which is
exact and costs O(N + edges).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np

from . import _kernels as K
from .analytics import ComponentDecomposition, components
from .graphs import Graph, sorted_isin
from .rng import as_generator


@nb.njit(cache=True)
def _coalescent_edges(w, q, rng):
    m = w.shape[0]
    cap = 64
    ei = np.empty(cap, dtype=np.int64)
    ej = np.empty(cap, dtype=np.int64)
    cnt = 0
    for i in range(m - 1):
        j = i + 1
        p = -math.expm1(-q * w[i] * w[j])
        while j < m and p > 0.0:
            if p < 1.0:
                skip = math.log(1.0 - rng.random()) / math.log1p(-p)
                # compare as float first: inf or nan from a vanishing p must not reach the int cast
                if not (skip < m - j):
                    break
                j += int(skip)
            pj = -math.expm1(-q * w[i] * w[j])
            if rng.random() * p < pj:
                if cnt == cap:
                    cap *= 2
                    ei2 = np.empty(cap, dtype=np.int64)
                    ej2 = np.empty(cap, dtype=np.int64)
                    ei2[:cnt] = ei[:cnt]
                    ej2[:cnt] = ej[:cnt]
                    ei = ei2
                    ej = ej2
                ei[cnt] = i
                ej[cnt] = j
                cnt += 1
            p = pj
            j += 1
    return ei[:cnt], ej[:cnt]


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    x: np.ndarray
    q: float
    edges: np.ndarray  # (k, 2), i < j, lexicographic
    labels: np.ndarray  # weight rank (0-based) of each vertex's component
    component_weights: np.ndarray  # non-increasing

    def sigma(self, r: float) -> float:
        return float(np.sum(self.x**r))

    @property
    def x_max(self) -> float:
        return float(self.x.max())

    @property
    def x_min(self) -> float:
        return float(self.x.min())


def weighted_graph(x, q: float, edges) -> WeightedGraph:
    """Rank the components of a weighted graph by weight (ties: smallest vertex)."""
    x = np.asarray(x, dtype=float)
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size:
        e = np.column_stack([e.min(axis=1), e.max(axis=1)])
        e = e[np.lexsort((e[:, 1], e[:, 0]))]
    ids, count = K.union_find_labels(x.size, e[:, 0], e[:, 1])
    w = np.bincount(ids, weights=x, minlength=count)
    rank_to_id = np.argsort(-w, kind="stable")
    id_to_rank = np.empty(count, dtype=np.int64)
    id_to_rank[rank_to_id] = np.arange(count)
    return WeightedGraph(x, float(q), e, id_to_rank[ids], w[rank_to_id])


def sample_W(x, q: float, rng) -> WeightedGraph:
    x = np.asarray(x, dtype=float)
    if x.size == 0 or np.any(x <= 0):
        raise ValueError("weights must be positive")
    if q < 0:
        raise ValueError("q must be nonnegative")
    rng = as_generator(rng)
    perm = np.argsort(-x, kind="stable")
    a, b = _coalescent_edges(x[perm], float(q), rng)
    return weighted_graph(x, q, np.column_stack([perm[a], perm[b]]))


@dataclass(frozen=True, eq=False)
class Blocks:
    """Disjoint connected graphs ``H_i`` laid out on one host vertex set."""

    n_host: int
    order: np.ndarray  # host vertices grouped by block
    offsets: np.ndarray
    internal: Graph  # host graph holding only the blocks' own edges

    @property
    def count(self) -> int:
        return self.offsets.size - 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def vertices(self, i: int) -> np.ndarray:
        return self.order[self.offsets[i]:self.offsets[i + 1]]

    def block_of(self) -> np.ndarray:
        out = np.empty(self.n_host, dtype=np.int64)
        out[self.order] = np.repeat(np.arange(self.count), self.sizes)
        return out

    def block(self, i: int) -> Graph:
        """``H_i`` relabelled to ``0..|H_i|-1`` in host-id order."""
        vs = self.vertices(i)
        e = self.internal.edges
        inside = np.isin(e[:, 0], vs) & np.isin(e[:, 1], vs)
        return Graph.from_edges(vs.size, np.searchsorted(vs, e[inside]))

    @classmethod
    def from_core(cls, core: Graph, decomp: ComponentDecomposition | None = None) -> "Blocks":
        decomp = decomp or components(core)
        return cls(core.n, decomp.order, decomp.offsets, core)

    @classmethod
    def from_graphs(cls, graphs) -> "Blocks":
        sizes = np.array([h.n for h in graphs], dtype=np.int64)
        if np.any(sizes < 1):
            raise ValueError("blocks must be nonempty")
        offsets = np.zeros(sizes.size + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        edges = []
        for h, off in zip(graphs, offsets[:-1]):
            if components(h).count != 1:
                raise ValueError("every block must be connected")
            edges.append(h.edges + off)
        n_host = int(offsets[-1])
        internal = Graph(n_host, np.concatenate(edges) if edges else np.empty((0, 2)))
        return cls(n_host, np.arange(n_host), offsets, internal)


@dataclass(frozen=True, eq=False)
class BlowupGraph:
    host: Graph
    block_of: np.ndarray
    skeleton: WeightedGraph
    excessive: int = 0  # excessive components plus excessive pairs (pruning only)


def coalescent_params(core: Graph, p1: float, decomp: ComponentDecomposition | None = None):
    """Weights ``n^{-2/3}|C_i|``, rate ``n^{4/3}(-log(1-p1))`` and blocks ``H_i = C_i``."""
    if not (0.0 < p1 < 1.0):
        raise ValueError(f"p1 must lie in (0,1), got {p1}")
    if core.n < 1:
        raise ValueError("core must have at least one vertex")
    decomp = decomp or components(core)
    n = core.n
    x = decomp.sizes / n ** (2.0 / 3.0)
    q = n ** (4.0 / 3.0) * -math.log1p(-p1)
    return x, q, Blocks.from_core(core, decomp)


def sample_WH(x, blocks: Blocks, q: float, rng) -> BlowupGraph:
    """Blow-up: each skeleton edge joins uniform vertices of the two blocks."""
    if isinstance(blocks, (list, tuple)):
        blocks = Blocks.from_graphs(blocks)
    x = np.asarray(x, dtype=float)
    if x.size != blocks.count:
        raise ValueError("one weight per block is required")
    rng = as_generator(rng)
    skel = sample_W(x, q, rng)
    sizes = blocks.sizes
    e = skel.edges
    pick = [blocks.order[blocks.offsets[e[:, c]] + (rng.random(e.shape[0]) * sizes[e[:, c]]).astype(np.int64)]
            for c in (0, 1)]
    connecting = np.column_stack(pick)
    host = Graph.from_edges(blocks.n_host, np.concatenate([blocks.internal.edges, connecting]))
    return BlowupGraph(host, blocks.block_of(), skel)


def prune_excessive(g0: Graph, g1: Graph, rng, p1: float | None = None,
                    decomp0: ComponentDecomposition | None = None) -> BlowupGraph:
    """Drop sprinkled edges inside core components; keep one uniform edge per joined pair."""
    if g0.n != g1.n or not np.all(sorted_isin(g0.slots, g1.slots)):
        raise ValueError("g0 must be a subgraph of g1")
    rng = as_generator(rng)
    d0 = decomp0 or components(g0)
    extra = g1.edges[~sorted_isin(g1.slots, g0.slots)]
    cu, cv = d0.labels[extra[:, 0]], d0.labels[extra[:, 1]]
    inside = cu == cv
    n_exc_components = np.unique(cu[inside]).size
    cross = extra[~inside]
    a = np.minimum(cu[~inside], cv[~inside])
    b = np.maximum(cu[~inside], cv[~inside])
    key = a * d0.count + b
    order = np.lexsort((rng.random(cross.shape[0]), key))
    ks = key[order]
    first = np.ones(ks.size, dtype=bool)
    first[1:] = ks[1:] != ks[:-1]
    n_exc_pairs = int(np.sum(np.diff(np.flatnonzero(np.append(first, True))) >= 2))
    kept = cross[order[first]]
    host = Graph.from_edges(g0.n, np.concatenate([g0.edges, kept]))
    n = g0.n
    x = d0.sizes / n ** (2.0 / 3.0)
    q = n ** (4.0 / 3.0) * -math.log1p(-p1) if p1 is not None else float("nan")
    skel = weighted_graph(x, q, np.column_stack([a[order[first]], b[order[first]]]))
    return BlowupGraph(host, d0.labels.copy(), skel, excessive=int(n_exc_components + n_exc_pairs))


@dataclass(frozen=True)
class Inequality:
    name: str
    lhs: float
    rhs: float
    holds: bool


@dataclass(frozen=True)
class ConditionReport:
    records: list[Inequality]
    inputs: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return all(r.holds for r in self.records)

    def __getitem__(self, name: str) -> Inequality:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> str:
        return json.dumps({"records": [asdict(r) for r in self.records], "inputs": self.inputs})


def _ineq(name, lhs, rhs) -> Inequality:
    lhs, rhs = float(lhs), float(rhs)
    return Inequality(name, lhs, rhs, bool(lhs < rhs))


def _ratio(num, den):
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def check_aldous_conditions(x, q: float, lam: float, eps: float, n: int) -> ConditionReport:
    """Finite-n form of the three multiplicative-coalescent entrance conditions."""
    x = np.asarray(x, dtype=float)
    xi = eps**3 * n
    if xi <= 1:
        raise ValueError(f"need eps^3 n > 1, got {xi}")
    s2, s3, xmax = float(np.sum(x**2)), float(np.sum(x**3)), float(x.max())
    records = [
        _ineq("sigma3_over_sigma2_cubed", abs(s3 / s2**3 - 1.0), xi ** (-1 / 5)),
        _ineq("q_minus_inverse_sigma2", abs(q - 1.0 / s2 - lam), xi ** (-1 / 15)),
        _ineq("xmax_over_sigma2", xmax / s2, 4.0 * xi ** (-1 / 3) * math.log(xi)),
    ]
    inputs = dict(sigma2=s2, sigma3=s3, x_max=xmax, q=float(q), lam=float(lam), eps=float(eps), n=int(n))
    return ConditionReport(records, inputs)


def scaling_factor(x, u) -> float:
    """Metric scale ``sigma2^2 / (sigma2 + sum x_i^2 u_i)``."""
    x = np.asarray(x, dtype=float)
    s2 = float(np.sum(x**2))
    if s2 <= 0:
        raise ValueError("sigma2 must be positive")
    return s2 * s2 / (s2 + float(np.sum(x**2 * np.asarray(u, dtype=float))))


def check_bbsw_conditions(x, u, d_max: float, q: float, eps: float, n: int,
                          eta0: float = 0.25, r0: float = 8.0) -> ConditionReport:
    """Finite-n form of the five metric entrance conditions for blocks ``H_i``.

    ``u`` holds the mean distance of two uniform vertices of each block and
    ``d_max`` the largest block diameter.
    """
    if not (0.0 < eta0 < 0.5):
        raise ValueError("eta0 must lie in (0, 1/2)")
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    xi = eps**3 * n
    if xi <= 1:
        raise ValueError(f"need eps^3 n > 1, got {xi}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    s2, xmax, xmin = float(np.sum(x**2)), float(x.max()), float(x.min())
    xu = float(np.sum(x**2 * u))
    s = scaling_factor(x, u)
    rate = 5.0 * xi ** (-(1.0 - 2.0 * eta0) / 6.0) * math.log(xi)
    rhs4 = 10.0 * xi ** (-2.0 / 3.0) * math.log(xi) ** 2 if eps < 0.1 else n ** (-1.0 / 8.0)
    records = [
        _ineq("xmax_over_sigma2_power", xmax / s2 ** (1.5 + eta0), rate),
        _ineq("sigma2_power_over_xmin", s2**r0 / xmin, 2.0 * n ** (-1.0 / 3.0)),
        _ineq("diameter_over_mass", s2 ** (1.5 - eta0) * d_max / (s2 + xu), rate),
        _ineq("diameter_over_distance_mass", _ratio(s2 * xmax * d_max, xu), rhs4),
        _ineq("scaling_factor", abs(s * n ** (1.0 / 3.0) - 1.0), 4.0 * xi ** (-2.0 / 5.0)),
    ]
    inputs = dict(sigma2=s2, x_max=xmax, x_min=xmin, d_max=float(d_max), sum_x2u=xu, q=float(q),
                  scaling=s, eps=float(eps), n=int(n), eta0=float(eta0), r0=float(r0))
    return ConditionReport(records, inputs)
