"""Finite measured metric spaces and Gromov-Hausdorff-Prokhorov comparisons.

The distance used throughout is the correspondence/coupling form

    d(A, B) = inf_{R, pi} max( dis(R) / 2,  D(pi),  pi(R^c) )

over correspondences ``R`` between the point sets and finite measures ``pi``
on ``A x B``, where ``D(pi)`` is the total variation between the marginals of
``pi`` and the two measures.  Unequal total masses are therefore allowed.
The zero space is a single point of zero mass, so
``d(A, zero) = max(diam(A)/2, mass(A))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from . import _kernels as K
from .analytics import ComponentDecomposition
from .graphs import Graph

EXACT_MAX_POINTS = 8
DENSE_MAX_POINTS = 2000


@dataclass(frozen=True, eq=False)
class MeasuredMetricSpace:
    """Finite metric space with a measure on its points.

    Either ``dist`` is a dense matrix, or the space is implicit: the
    vertices ``vertices`` of ``graph`` with graph distance times
    ``length_scale``, computed by BFS on demand.
    """

    mass: np.ndarray
    dist: np.ndarray | None = None
    graph: Graph | None = None
    vertices: np.ndarray | None = None
    length_scale: float = 1.0

    def __post_init__(self):
        mass = np.asarray(self.mass, dtype=float).reshape(-1)
        object.__setattr__(self, "mass", mass)
        if np.any(mass < 0):
            raise ValueError("masses must be nonnegative")
        if self.dist is not None:
            d = np.asarray(self.dist, dtype=float).reshape(mass.size, mass.size)
            object.__setattr__(self, "dist", d)
        elif self.graph is None or self.vertices is None:
            raise ValueError("need a distance matrix or a graph with vertices")
        elif len(self.vertices) != mass.size:
            raise ValueError("one mass per vertex is required")

    @classmethod
    def zero(cls) -> "MeasuredMetricSpace":
        return cls(np.empty(0), np.empty((0, 0)))

    @property
    def points(self) -> int:
        return int(self.mass.size)

    @property
    def implicit(self) -> bool:
        return self.dist is None

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    @cached_property
    def dense(self) -> np.ndarray:
        if self.dist is not None:
            return self.dist
        indptr, indices = self.graph.csr
        d = K.pairwise_distances(indptr, indices, np.asarray(self.vertices, dtype=np.int64))
        return d * self.length_scale

    def distances_from(self, i: int) -> np.ndarray:
        if self.dist is not None:
            return self.dist[i]
        indptr, indices = self.graph.csr
        d = K.multi_source_bfs(indptr, indices, np.array([self.vertices[i]], dtype=np.int64))
        return d[self.vertices] * self.length_scale

    def diameter(self) -> float:
        return float(self.dense.max()) if self.points else 0.0

    def check_metric(self, exhaustive_max: int = 64, samples: int = 200, rng=None, tol: float = 1e-9) -> bool:
        """Symmetry, zero diagonal and triangle inequality.

        Exhaustive up to ``exhaustive_max`` points; beyond that, ``samples // 2``
        random pairs each checked against every third point.
        """
        m = self.points
        if m == 0:
            return True
        if m <= exhaustive_max:
            d = self.dense
            if np.any(d < 0) or not np.allclose(d, d.T, atol=tol) or np.any(np.abs(np.diag(d)) > tol):
                return False
            return bool(np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + tol))
        # each sampled pair (a, b) checks d(a, c) <= d(a, b) + d(b, c) for every c
        rng = np.random.default_rng(rng)
        n_pairs = max(1, samples // 2)
        for a, b in rng.integers(0, m, size=(n_pairs, 2)):
            da, db = self.distances_from(a), self.distances_from(b)
            if np.any(da < 0) or abs(da[a]) > tol or abs(da[b] - db[a]) > tol:
                return False
            if np.any(da > da[b] + db + tol):
                return False
        return True

    def to_json(self) -> str:
        return json.dumps({"points": self.points, "dist": self.dense.tolist(), "mass": self.mass.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "MeasuredMetricSpace":
        obj = json.loads(text)
        m = int(obj["points"])
        return cls(np.asarray(obj["mass"], dtype=float), np.asarray(obj["dist"], dtype=float).reshape(m, m))


def extract_space(g: Graph, decomp: ComponentDecomposition, j: int, length_scale: float,
                  mass_scale, dense: bool | None = None) -> MeasuredMetricSpace:
    """Component ``C_j`` (1-based rank) with scaled graph metric and point masses.

    ``mass_scale`` is a per-point mass (scalar or one value per vertex of
    ``C_j``).  Components above ``DENSE_MAX_POINTS`` stay implicit unless
    ``dense`` forces otherwise.
    """
    verts = decomp.members(j)
    mass = np.broadcast_to(np.asarray(mass_scale, dtype=float), verts.shape).copy()
    if dense is None:
        dense = verts.size <= DENSE_MAX_POINTS
    if dense:
        indptr, indices = g.csr
        d = K.pairwise_distances(indptr, indices, verts) * float(length_scale)
        return MeasuredMetricSpace(mass, d)
    return MeasuredMetricSpace(mass, graph=g, vertices=verts, length_scale=float(length_scale))


def _as_nonempty(a: MeasuredMetricSpace):
    if a.points == 0:
        return np.zeros((1, 1)), np.zeros(1)
    return a.dense, a.mass


def _coupling_lp(mu_a, mu_b, in_rel: np.ndarray) -> float:
    """min over pi >= 0 of max(D(pi), pi(R^c)) for a fixed relation mask."""
    ma, mb = mu_a.size, mu_b.size
    npi = ma * mb
    nvar = npi + ma + mb + 1
    s = nvar - 1
    c = np.zeros(nvar)
    c[s] = 1.0
    rows, rhs = [], []

    def row():
        return np.zeros(nvar)

    r = row()
    r[npi:npi + ma + mb] = 1.0
    r[s] = -1.0
    rows.append(r)
    rhs.append(0.0)
    r = row()
    r[:npi] = (~in_rel).reshape(-1).astype(float)
    r[s] = -1.0
    rows.append(r)
    rhs.append(0.0)
    for x in range(ma):
        marg = row()
        marg[x * mb:(x + 1) * mb] = 1.0
        up = marg.copy()
        up[npi + x] = -1.0
        rows.append(up)  # sum pi - a_x <= mu
        rhs.append(mu_a[x])
        lo = -marg
        lo[npi + x] = -1.0
        rows.append(lo)  # mu - sum pi <= a_x
        rhs.append(-mu_a[x])
    for y in range(mb):
        marg = row()
        marg[y:npi:mb] = 1.0
        up = marg.copy()
        up[npi + ma + y] = -1.0
        rows.append(up)
        rhs.append(mu_b[y])
        lo = -marg
        lo[npi + ma + y] = -1.0
        rows.append(lo)
        rhs.append(-mu_b[y])
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"coupling LP failed: {res.message}")
    return max(0.0, float(res.fun))


def _best_relation(mu_a, mu_b, compat: np.ndarray) -> np.ndarray | None:
    """Relation mask minimizing the coupling term among correspondences inside ``compat``.

    ``compat[i, j]`` says pairs ``i`` and ``j`` of ``A x B`` (row-major) may sit
    in one correspondence.  Solved as a mixed-integer program: binaries pick
    the relation, the coupling splits into mass inside and outside it.
    Returns None when no correspondence fits.
    """
    ma, mb = mu_a.size, mu_b.size
    npair = ma * mb
    big = float(mu_a.sum() + mu_b.sum()) + 1.0
    # variables: r | pi_in | pi_out | slack_a | slack_b | s
    nvar = 3 * npair + ma + mb + 1
    R, PI, PO, SA, SB, S = 0, npair, 2 * npair, 3 * npair, 3 * npair + ma, nvar - 1
    rows, lo, hi = [], [], []

    def add(coef, lb, ub):
        rows.append(coef)
        lo.append(lb)
        hi.append(ub)

    iu, ju = np.nonzero(np.triu(~compat, 1))
    for i, j in zip(iu, ju):
        r = np.zeros(nvar)
        r[R + i] = r[R + j] = 1.0
        add(r, -np.inf, 1.0)
    pair_x = np.repeat(np.arange(ma), mb)
    pair_y = np.tile(np.arange(mb), ma)
    for x in range(ma):
        r = np.zeros(nvar)
        r[R + np.flatnonzero(pair_x == x)] = 1.0
        add(r, 1.0, np.inf)
        m = np.zeros(nvar)
        m[PI + np.flatnonzero(pair_x == x)] = 1.0
        m[PO + np.flatnonzero(pair_x == x)] = 1.0
        up = m.copy()
        up[SA + x] = -1.0
        add(up, -np.inf, mu_a[x])
        down = m.copy()
        down[SA + x] = 1.0
        add(down, mu_a[x], np.inf)
    for y in range(mb):
        r = np.zeros(nvar)
        r[R + np.flatnonzero(pair_y == y)] = 1.0
        add(r, 1.0, np.inf)
        m = np.zeros(nvar)
        m[PI + np.flatnonzero(pair_y == y)] = 1.0
        m[PO + np.flatnonzero(pair_y == y)] = 1.0
        up = m.copy()
        up[SB + y] = -1.0
        add(up, -np.inf, mu_b[y])
        down = m.copy()
        down[SB + y] = 1.0
        add(down, mu_b[y], np.inf)
    for k in range(npair):
        r = np.zeros(nvar)
        r[PI + k] = 1.0
        r[R + k] = -big
        add(r, -np.inf, 0.0)
    r = np.zeros(nvar)
    r[SA:SB + mb] = -1.0
    r[S] = 1.0
    add(r, 0.0, np.inf)
    r = np.zeros(nvar)
    r[PO:PO + npair] = -1.0
    r[S] = 1.0
    add(r, 0.0, np.inf)
    c = np.zeros(nvar)
    c[S] = 1.0
    integrality = np.zeros(nvar)
    integrality[:npair] = 1
    ub = np.full(nvar, np.inf)
    ub[:npair] = 1.0
    res = milp(c, constraints=LinearConstraint(np.array(rows), lo, hi), integrality=integrality,
               bounds=Bounds(np.zeros(nvar), ub))
    if res.status == 2:
        return None
    if not res.success:
        raise RuntimeError(f"relation search failed: {res.message}")
    return (res.x[:npair] > 0.5).reshape(ma, mb)


def ghp_exact(a: MeasuredMetricSpace, b: MeasuredMetricSpace, tol: float = 1e-12) -> float:
    """Exact distance for spaces of at most ``EXACT_MAX_POINTS`` points.

    For each candidate distortion level ``t`` the correspondences with
    ``dis(R) <= 2t`` are the cliques of a compatibility graph on ``A x B``;
    the best one for the coupling term comes from a small mixed-integer
    program and its value is then re-solved as a plain LP.  The coupling
    optimum is non-increasing in ``t``, so the crossing point with ``t`` is
    found by bisection over the candidate levels.
    """
    if a.points > EXACT_MAX_POINTS or b.points > EXACT_MAX_POINTS:
        raise ValueError(f"exact GHP is limited to {EXACT_MAX_POINTS} points; use a bound")
    da, mu_a = _as_nonempty(a)
    db, mu_b = _as_nonempty(b)
    ma, mb = mu_a.size, mu_b.size
    gap = 0.5 * np.abs(da[:, None, :, None] - db[None, :, None, :]).reshape(ma * mb, ma * mb)
    levels = np.unique(np.concatenate([[0.0], gap.reshape(-1)]))

    def inner(t: float) -> float:
        rel = _best_relation(mu_a, mu_b, gap <= t + tol)
        return math.inf if rel is None else _coupling_lp(mu_a, mu_b, rel)

    values: dict[int, float] = {}

    def val(k):
        if k not in values:
            values[k] = inner(float(levels[k]))
        return values[k]

    lo, hi = 0, levels.size - 1
    if val(hi) > levels[hi]:
        return float(val(hi))
    while lo < hi:
        mid = (lo + hi) // 2
        if val(mid) <= levels[mid]:
            hi = mid
        else:
            lo = mid + 1
    best = float(levels[lo])
    if lo > 0:
        best = min(best, val(lo - 1))
    return best


def ghp_same_points_bound(a: MeasuredMetricSpace, b: MeasuredMetricSpace) -> float:
    """Upper bound from the identity correspondence between two metrics on one point set."""
    if a.points != b.points:
        raise ValueError("spaces must share their point set")
    if a.points == 0:
        return 0.0
    return max(0.5 * float(np.max(np.abs(a.dense - b.dense))), float(np.abs(a.mass - b.mass).sum()))


def ghp_upper_embedded(sub: MeasuredMetricSpace, sup: MeasuredMetricSpace, embedding,
                       check: bool = True, exhaustive_max: int = 64, samples: int = 32,
                       rng=None, tol: float = 1e-9) -> float:
    """Bound ``max(r, D)`` for ``sub`` isometrically embedded in ``sup``.

    ``embedding[i]`` is the point of ``sup`` carrying point ``i`` of ``sub``;
    ``r`` is the largest distance from a point of ``sup`` to the image and
    ``D`` the total variation between the two measures under the embedding.
    """
    phi = np.asarray(embedding, dtype=np.int64)
    if phi.size != sub.points or np.unique(phi).size != phi.size:
        raise ValueError("embedding must be injective and defined on every point")
    if phi.size and (phi.min() < 0 or phi.max() >= sup.points):
        raise ValueError("embedding points outside the target space")
    if check and sub.points:
        if sub.points <= exhaustive_max or not (sub.implicit and sup.implicit):
            rows = np.arange(sub.points)
        else:
            rows = np.random.default_rng(rng).choice(sub.points, size=min(samples, sub.points), replace=False)
        for i in rows:
            if np.max(np.abs(sub.distances_from(i) - sup.distances_from(phi[i])[phi])) > tol:
                raise ValueError("embedding is not isometric")
    if sub.points == 0:
        r = 0.5 * sup.diameter()
    elif sup.implicit:
        indptr, indices = sup.graph.csr
        d = K.multi_source_bfs(indptr, indices, np.asarray(sup.vertices, dtype=np.int64)[phi])
        r = float(d[sup.vertices].max()) * sup.length_scale
    else:
        r = float(sup.dense[:, phi].min(axis=1).max())
    outside = np.ones(sup.points, dtype=bool)
    outside[phi] = False
    mass_gap = float(np.abs(sub.mass - sup.mass[phi]).sum() + sup.mass[outside].sum())
    return max(r, mass_gap)


@dataclass(frozen=True)
class GhpAggregate:
    value: float
    p: float
    mode: str
    pairs: tuple[float, ...]


def ghp_aggregate(a_seq, b_seq, p: float = 4.0, pair_distance=ghp_exact, mode: str | None = None) -> GhpAggregate:
    """``(sum_i d(A_i, B_i)^p)^{1/p}``, the shorter sequence padded with the zero space."""
    if p < 1:
        raise ValueError("p must be >= 1")
    a_seq, b_seq = list(a_seq), list(b_seq)
    m = max(len(a_seq), len(b_seq))
    a_seq += [MeasuredMetricSpace.zero()] * (m - len(a_seq))
    b_seq += [MeasuredMetricSpace.zero()] * (m - len(b_seq))
    pairs = tuple(float(pair_distance(a, b)) for a, b in zip(a_seq, b_seq))
    value = float(np.sum(np.asarray(pairs) ** p) ** (1.0 / p)) if pairs else 0.0
    return GhpAggregate(value, float(p), mode or getattr(pair_distance, "__name__", "custom"), pairs)
