"""Sparse G(n, p) graphs, the noise operator and the sprinkling decomposition.

Edge slots are numbered row-major over pairs ``i < j``::

    (0,1) (0,2) ... (0,n-1) (1,2) ... (n-2,n-1)
      0     1        n-2     n-1        C(n,2)-1

Every sampler works on slot indices with geometric skips, so the cost is
proportional to the number of edges produced, never to ``C(n, 2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .rng import as_generator

REL_TOL = 1e-12


def num_slots(n: int) -> int:
    return n * (n - 1) // 2


def _row_offset(i, n):
    # index of pair (i, i+1)
    return i * (2 * n - i - 1) // 2


def edge_index(i: int, j: int, n: int) -> int:
    """Slot of the pair ``(i, j)``, ``0 <= i < j < n``."""
    i, j, n = int(i), int(j), int(n)
    if not (0 <= i < j < n):
        raise ValueError(f"need 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return _row_offset(i, n) + (j - i - 1)


def edge_pair(k: int, n: int) -> tuple[int, int]:
    """Inverse of :func:`edge_index`."""
    k, n = int(k), int(n)
    if not (0 <= k < num_slots(n)):
        raise ValueError(f"slot {k} out of range for n={n}")
    i, j = edge_pairs(np.array([k], dtype=np.int64), n)
    return int(i[0]), int(j[0])


def edge_indices(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


def edge_pairs(k: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(k, dtype=np.int64)
    if k.size == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy()
    b = 2.0 * n - 1.0
    i = np.floor((b - np.sqrt(np.maximum(b * b - 8.0 * k, 0.0))) / 2.0).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    # float rounding can put i off by one in either direction
    too_big = _row_offset(i, n) > k
    i[too_big] -= 1
    too_small = _row_offset(i + 1, n) <= k
    i[too_small] += 1
    j = k - _row_offset(i, n) + i + 1
    return i, j


def skip_sample(n_slots: int, p: float, rng) -> np.ndarray:
    """Sorted indices of successes among ``n_slots`` independent Bernoulli(p) trials."""
    rng = as_generator(rng)
    if p <= 0.0 or n_slots <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(n_slots, dtype=np.int64)
    expected = n_slots * p
    batch = int(expected + 6.0 * math.sqrt(expected) + 16)
    chunks = []
    pos = -1
    while True:
        # tiny p saturates the draws at int64 max; any skip past the end is equivalent
        skips = np.minimum(rng.geometric(p, size=batch), n_slots)
        idx = pos + np.cumsum(skips, dtype=np.int64)
        if idx[-1] >= n_slots:
            chunks.append(idx[idx < n_slots])
            break
        chunks.append(idx)
        pos = int(idx[-1])
        remaining = (n_slots - pos) * p
        batch = int(remaining + 6.0 * math.sqrt(remaining) + 16)
    return np.concatenate(chunks)


def sorted_isin(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Membership of ``a`` in the sorted array ``b``."""
    if b.size == 0:
        return np.zeros(a.shape, dtype=bool)
    pos = np.searchsorted(b, a)
    pos[pos == b.size] = b.size - 1
    return b[pos] == a


@dataclass(frozen=True)
class NoiseParams:
    n: int
    lam: float
    p: float
    eps: float
    p0: float
    p1: float
    theta: float

    @property
    def xi(self) -> float:
        """Distance from criticality of the core, ``theta**3 * n``."""
        return self.theta**3 * self.n

    @property
    def eps3n(self) -> float:
        return self.eps**3 * self.n

    @classmethod
    def from_p(cls, n: int, p: float, eps: float) -> "NoiseParams":
        if n < 2:
            raise ValueError("need n >= 2")
        if not (0.0 < p < 1.0):
            raise ValueError(f"edge probability must lie in (0,1), got {p}")
        if not (0.0 <= eps <= 1.0):
            raise ValueError(f"eps must lie in [0,1], got {eps}")
        p0 = p * (1.0 - eps) / (1.0 - eps * p)
        p1 = eps * p
        lam = (n * p - 1.0) * n ** (1.0 / 3.0)
        return cls(n=n, lam=lam, p=p, eps=eps, p0=p0, p1=p1, theta=1.0 - n * p0)


def derive_noise_params(n: int, lam: float, eps: float) -> NoiseParams:
    """Parameters of the critical graph ``p = (1 + lam n^{-1/3}) / n`` and its noise split."""
    if n < 2:
        raise ValueError("need n >= 2")
    p = (1.0 + lam * n ** (-1.0 / 3.0)) / n
    if p <= 0.0:
        raise ValueError(f"lambda={lam} too negative for n={n}: p={p}")
    if p >= 1.0:
        raise ValueError(f"n={n} too small for lambda={lam}: p={p}")
    params = NoiseParams.from_p(n, p, eps)
    return NoiseParams(n=n, lam=float(lam), p=p, eps=params.eps, p0=params.p0,
                       p1=params.p1, theta=params.theta)


def eps_for_theta(n: int, lam: float, theta: float) -> float:
    """Noise level whose core has ``1 - n p0 = theta``."""
    c = 1.0 + lam * n ** (-1.0 / 3.0)
    eps = (c - 1.0 + theta) / (c * (1.0 - (1.0 - theta) / n))
    if not (0.0 <= eps <= 1.0):
        raise ValueError(f"theta={theta} unreachable for n={n}, lambda={lam}")
    return eps


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph on ``0..n-1`` in canonical edge order."""

    n: int
    edges: np.ndarray  # (m, 2) int64, rows (i, j) with i < j, lexicographically sorted

    def __post_init__(self):
        e = np.ascontiguousarray(self.edges, dtype=np.int64).reshape(-1, 2)
        e.flags.writeable = False
        object.__setattr__(self, "edges", e)
        check_canonical(self)

    @classmethod
    def from_slots(cls, n: int, slots: np.ndarray) -> "Graph":
        slots = np.asarray(slots, dtype=np.int64)
        i, j = edge_pairs(slots, n)
        g = cls(n, np.column_stack([i, j]))
        s = slots.copy()
        s.flags.writeable = False
        g.__dict__["slots"] = s
        return g

    @classmethod
    def from_edges(cls, n: int, pairs) -> "Graph":
        """Canonicalize an arbitrary pair list (orientation, order, duplicates)."""
        e = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        return cls.from_slots(n, np.unique(edge_indices(lo, hi, n)))

    @classmethod
    def empty(cls, n: int) -> "Graph":
        return cls(n, np.empty((0, 2), dtype=np.int64))

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def slots(self) -> np.ndarray:
        s = edge_indices(self.edges[:, 0], self.edges[:, 1], self.n)
        s.flags.writeable = False
        return s

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Adjacency as ``(indptr, indices)``; neighbours of each vertex ascending."""
        n = self.n
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return indptr, np.ascontiguousarray(dst[order])

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr[0])

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        i, j = min(i, j), max(i, j)
        return bool(sorted_isin(np.array([edge_index(i, j, self.n)]), self.slots)[0])

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __hash__(self):
        return hash((self.n, self.edges.tobytes()))

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def check_canonical(g: Graph) -> None:
    e = g.edges
    if e.size == 0:
        return
    if np.any(e[:, 0] >= e[:, 1]):
        raise ValueError("edges must satisfy i < j (no self-loops)")
    if e[:, 0].min() < 0 or e[:, 1].max() >= g.n:
        raise ValueError("edge endpoint out of range")
    s = edge_indices(e[:, 0], e[:, 1], g.n)
    if np.any(np.diff(s) <= 0):
        raise ValueError("edges must be sorted and free of duplicates")


def sample_gnp(n: int, p: float, rng) -> Graph:
    """Erdos-Renyi G(n, p) by geometric skips over edge slots."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must lie in [0,1], got {p}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    return Graph.from_slots(n, skip_sample(num_slots(n), p, rng))


def sprinkle(g0: Graph, p1: float, rng) -> Graph:
    """Add each pair absent from ``g0`` independently with probability ``p1``."""
    extra = skip_sample(num_slots(g0.n), p1, rng)
    extra = extra[~sorted_isin(extra, g0.slots)]
    if extra.size == 0:
        return g0
    return Graph.from_slots(g0.n, np.union1d(g0.slots, extra))


def apply_noise(g: Graph, params: NoiseParams, rng) -> Graph:
    """Noise operator: resample every edge indicator with probability ``eps``.

    Present edges survive with probability ``1 - eps(1-p)``; absent pairs are
    switched on with probability ``eps p``.
    """
    if g.n != params.n:
        raise ValueError(f"graph has {g.n} vertices, params expect {params.n}")
    rng = as_generator(rng)
    eps, p = params.eps, params.p
    if eps == 0.0:
        return g
    slots = g.slots
    kept = slots[rng.random(slots.size) >= eps * (1.0 - p)]
    added = skip_sample(num_slots(g.n), eps * p, rng)
    added = added[~sorted_isin(added, slots)]
    return Graph.from_slots(g.n, np.union1d(kept, added))


@dataclass(frozen=True, eq=False)
class SprinklingTriple:
    params: NoiseParams
    g0: Graph
    g1: Graph
    g1_prime: Graph


def sample_sprinkling_triple(params: NoiseParams, rng) -> SprinklingTriple:
    """Core ``G(n, p0)`` plus two conditionally independent sprinklings at rate ``p1``.

    ``rng`` is either one generator (split into three children) or a
    sequence of three generators for core, first and second sprinkling.
    """
    if isinstance(rng, (list, tuple)):
        core_rng, s1, s2 = (as_generator(r) for r in rng)
    else:
        core_rng, s1, s2 = as_generator(rng).spawn(3)
    g0 = sample_gnp(params.n, params.p0, core_rng)
    return SprinklingTriple(params, g0, sprinkle(g0, params.p1, s1), sprinkle(g0, params.p1, s2))
