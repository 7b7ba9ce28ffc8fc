"""Observables, covariance estimators, stability diagnostics and the trial runner.

Every trial draws from streams derived from ``(master_seed, trial_id,
purpose)``, so a record depends only on the configuration and its id.
Trial ids are global: the trials of cell ``c`` are ``c*trials ..
(c+1)*trials - 1``, cells being enumerated over ``n_grid`` then ``eps``.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels as K
from .analytics import (ComponentDecomposition, components, distance_stats, has_cycle_in_range,
                        l2_distance, size_vector, susceptibility)
from .graphs import Graph, NoiseParams, apply_noise, derive_noise_params, sample_gnp, sprinkle
from .metric import MeasuredMetricSpace, ghp_upper_embedded
from .rng import Purpose, stream

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WORKERS_ENV = "CRITNOISE_WORKERS"

RECORD_COLUMNS = (
    "trial_id", "n", "eps", "f_g", "f_geps", "x_l2_delta",
    "c1_g", "c1_geps", "s2_g", "s2_geps", "diam1_g", "diam1_geps", "z_g", "z_geps",
    "a_j_holds", "c_j_holds", "b_sup", "ghp_bound",
)

OBSERVABLE_KINDS = ("size_threshold", "diameter_threshold", "cycle_in_range", "l2_ball")


@dataclass(frozen=True)
class Observable:
    """Boolean function of a graph.

    ``size_threshold``: ``|C_j| >= a n^{2/3}``.  ``diameter_threshold``:
    ``diam(C_j) >= a n^{1/3}``.  ``cycle_in_range``: a cycle of length in
    ``(a n^{1/3}, b n^{1/3})``.  ``l2_ball``: ``||X(G) - reference||_2 <= radius``.
    A missing component has size and diameter 0.
    """

    kind: str
    j: int = 1
    a: float | None = None
    b: float | None = None
    reference: tuple[float, ...] = ()
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in OBSERVABLE_KINDS:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.j < 1:
            raise ValueError("component rank j must be >= 1")
        if self.kind == "cycle_in_range" and not (self.a is not None and self.b is not None and 0 < self.a < self.b):
            raise ValueError("cycle_in_range needs 0 < a < b")
        if self.kind == "l2_ball" and (self.radius is None or self.radius < 0):
            raise ValueError("l2_ball needs a nonnegative radius")
        object.__setattr__(self, "reference", tuple(float(v) for v in self.reference))

    @classmethod
    def size_threshold(cls, j, a):
        return cls("size_threshold", j=int(j), a=float(a))

    @classmethod
    def diameter_threshold(cls, j, a):
        return cls("diameter_threshold", j=int(j), a=float(a))

    @classmethod
    def cycle_in_range(cls, a, b):
        return cls("cycle_in_range", a=float(a), b=float(b))

    @classmethod
    def l2_ball(cls, reference, radius):
        return cls("l2_ball", reference=tuple(reference), radius=float(radius))

    @property
    def calibrated(self) -> bool:
        return self.kind in ("l2_ball", "cycle_in_range") or self.a is not None

    def __call__(self, g: Graph, decomp: ComponentDecomposition | None = None) -> int:
        if not self.calibrated:
            raise ValueError("threshold not calibrated")
        decomp = decomp if decomp is not None else components(g)
        n = g.n
        if self.kind == "size_threshold":
            size = decomp.sizes[self.j - 1] if self.j <= decomp.count else 0
            return int(size >= self.a * n ** (2 / 3))
        if self.kind == "diameter_threshold":
            d = distance_stats(g, decomp, ranks=[self.j]).diameters[0] if self.j <= decomp.count else 0
            return int(d >= self.a * n ** (1 / 3))
        if self.kind == "cycle_in_range":
            return int(has_cycle_in_range(g, self.a, self.b))
        ref = np.asarray(self.reference, dtype=float)
        x = size_vector(decomp).entries
        m = max(x.size, ref.size)
        diff = np.zeros(m)
        diff[:x.size] += x
        diff[:ref.size] -= ref
        return int(math.sqrt(float(diff @ diff)) <= self.radius)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind in ("size_threshold", "diameter_threshold"):
            d.update(j=self.j, a=self.a)
        elif self.kind == "cycle_in_range":
            d.update(a=self.a, b=self.b)
        else:
            d.update(reference=list(self.reference), radius=self.radius)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Observable":
        d = dict(d)
        if "reference" in d:
            d["reference"] = tuple(d["reference"])
        return cls(**d)


@dataclass(frozen=True)
class Cell:
    index: int
    n: int
    eps: float
    lam: float

    @property
    def params(self) -> NoiseParams:
        return derive_noise_params(self.n, self.lam, self.eps)

    @property
    def eps_scaled(self) -> float:
        return self.eps * self.n ** (1 / 3)


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment description; ``eps_rule`` is ``{"c": [...], "a": a}`` for
    ``eps = c n^{-a}`` or ``{"eps": [...]}`` for explicit values."""

    n_grid: tuple[int, ...]
    eps_rule: dict
    trials: int
    observable: Observable
    master_seed: int
    output_dir: str = "results"
    lam: float = 0.0
    inner_trials: int = 0
    mode: str = "sensitivity"
    aux_distances: bool = False
    j: int = 1
    delta: float = 0.1
    pilot_trials: int = 400

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        self.validate()

    def validate(self) -> None:
        if self.mode not in ("sensitivity", "stability"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.trials < 2:
            raise ValueError("trials must be >= 2")
        if self.inner_trials and self.inner_trials < 2:
            raise ValueError("inner_trials must be 0 or >= 2")
        if not self.n_grid or min(self.n_grid) < 2:
            raise ValueError("n_grid must list sizes >= 2")
        if not (0 <= self.master_seed < 2**64):
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not ("eps" in self.eps_rule or {"c", "a"} <= set(self.eps_rule)):
            raise ValueError("eps_rule needs 'eps' or both 'c' and 'a'")
        for n in self.n_grid:
            for e in self.eps_values(n):
                if not (0.0 < e < 1.0):
                    raise ValueError(f"eps={e} outside (0,1) at n={n}")

    def eps_values(self, n: int) -> list[float]:
        if "eps" in self.eps_rule:
            return [float(e) for e in self.eps_rule["eps"]]
        a = float(self.eps_rule["a"])
        return [float(c) * n ** (-a) for c in self.eps_rule["c"]]

    def cells(self) -> list[Cell]:
        out = []
        for n in self.n_grid:
            for e in self.eps_values(n):
                out.append(Cell(len(out), n, e, self.lam))
        return out

    def with_observable(self, obs: Observable) -> "ExperimentConfig":
        return dataclasses.replace(self, observable=obs)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "n_grid": list(self.n_grid), "lambda": self.lam,
            "eps_rule": self.eps_rule, "trials": self.trials, "inner_trials": self.inner_trials,
            "observable": self.observable.to_dict(), "master_seed": self.master_seed,
            "output_dir": self.output_dir, "aux_distances": self.aux_distances,
            "j": self.j, "delta": self.delta, "pilot_trials": self.pilot_trials,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "observable" not in d:
            raise ValueError("config needs an observable")
        d["observable"] = Observable.from_dict(d["observable"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialRecord:
    """One trial.  In sensitivity mode ``g`` is G and ``geps`` its noised copy;
    in stability mode they are the core G0 and the sprinkled G1."""

    trial_id: int
    n: int
    eps: float
    f_g: int
    f_geps: int
    x_l2_delta: float
    c1_g: int
    c1_geps: int
    s2_g: int
    s2_geps: int
    diam1_g: int | None = None
    diam1_geps: int | None = None
    z_g: int | None = None
    z_geps: int | None = None
    a_j_holds: bool | None = None
    c_j_holds: bool | None = None
    b_sup: int | None = None
    ghp_bound: float | None = None

    def row(self) -> list[str]:
        out = []
        for name in RECORD_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, bool):
                out.append(str(int(v)))
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


def _graph_summary(g: Graph, decomp: ComponentDecomposition, aux_distances: bool):
    c1 = int(decomp.sizes[0]) if decomp.count else 0
    s2 = susceptibility(decomp, 2) if decomp.count else 0
    if not aux_distances:
        return c1, s2, None, None
    ds = distance_stats(g, decomp)
    return c1, s2, int(ds.diameters[0]) if decomp.count else 0, ds.z_total


def cell_of(cfg: ExperimentConfig, trial_id: int) -> Cell:
    cells = cfg.cells()
    c = trial_id // cfg.trials
    if not (0 <= c < len(cells)):
        raise ValueError(f"trial_id {trial_id} out of range")
    return cells[c]


def run_trial(cfg: ExperimentConfig, trial_id: int) -> TrialRecord:
    cell = cell_of(cfg, trial_id)
    params = cell.params
    if cfg.mode == "stability":
        return _stability_record(cfg, cell, params, trial_id)
    g = sample_gnp(params.n, params.p, stream(cfg.master_seed, trial_id, Purpose.GRAPH))
    ge = apply_noise(g, params, stream(cfg.master_seed, trial_id, Purpose.NOISE))
    d, de = components(g), components(ge)
    a = _graph_summary(g, d, cfg.aux_distances)
    b = _graph_summary(ge, de, cfg.aux_distances)
    return TrialRecord(
        trial_id, params.n, params.eps, cfg.observable(g, d), cfg.observable(ge, de),
        l2_distance(size_vector(d), size_vector(de)),
        a[0], b[0], a[1], b[1], a[2], b[2], a[3], b[3],
    )


# --------------------------------------------------------------------------
# estimators


def covariance_from_bits(f, g) -> dict:
    """Plug-in covariance of paired bits with jackknife errors.

    ``corr_hat = cov / (p(1-p))`` with ``p`` the pooled mean of both
    columns; it is ``nan`` when ``p`` is 0 or 1.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    N = f.size
    if N < 2:
        raise ValueError("need at least two trials")
    sf, sg, sfg = f.sum(), g.sum(), (f * g).sum()
    cov = sfg / N - (sf / N) * (sg / N)
    p = (sf + sg) / (2 * N)
    # leave-one-out statistics
    m = N - 1
    cov_i = (sfg - f * g) / m - ((sf - f) / m) * ((sg - g) / m)
    p_i = (sf - f + sg - g) / (2 * m)

    def jk(vals):
        return float(math.sqrt(m / N * np.sum((vals - vals.mean()) ** 2)))

    out = {"trials": N, "p_hat": float(p), "cov_hat": float(cov), "std_err": jk(cov_i)}
    if 0.0 < p < 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            corr_i = cov_i / (p_i * (1 - p_i))
        out["corr_hat"] = float(cov / (p * (1 - p)))
        out["corr_std_err"] = jk(corr_i) if np.all(np.isfinite(corr_i)) else float("nan")
    else:
        out["corr_hat"] = float("nan")
        out["corr_std_err"] = float("nan")
    return out


def conditional_variance_from_means(pbar, m: int) -> dict:
    """Unbiased estimate of ``Var(P(f=1 | core))`` from inner means over ``m`` sprinklings."""
    pbar = np.asarray(pbar, dtype=float)
    N = pbar.size
    if N < 2 or m < 2:
        raise ValueError("need at least two outer and two inner trials")

    def est(s1, s2, s3, k):
        # s1 = sum pbar, s2 = sum pbar^2, s3 = sum pbar(1-pbar), over k outer draws
        var = (s2 - s1 * s1 / k) / (k - 1)
        return var - s3 / k / (m - 1)

    q = pbar * (1 - pbar)
    s1, s2, s3 = pbar.sum(), (pbar * pbar).sum(), q.sum()
    value = est(s1, s2, s3, N)
    loo = est(s1 - pbar, s2 - pbar * pbar, s3 - q, N - 1) if N > 2 else np.full(N, value)
    se = float(math.sqrt((N - 1) / N * np.sum((loo - loo.mean()) ** 2)))
    return {"outer": N, "inner": m, "var_hat": float(value), "std_err": se,
            "mean": float(pbar.mean()), "mean_std_err": float(pbar.std(ddof=1) / math.sqrt(N))}


def _workers(workers: int | None) -> int:
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _pmap(fn, args, workers: int | None):
    w = _workers(workers)
    if w == 1:
        yield from map(fn, args)
        return
    with ProcessPoolExecutor(max_workers=w) as ex:
        yield from ex.map(fn, args, chunksize=max(1, len(args) // (8 * w)))


class _TrialFn:
    def __init__(self, cfg):
        self.cfg = cfg

    def __call__(self, trial_id):
        return run_trial(self.cfg, trial_id)


def _pick_cell(cfg: ExperimentConfig, n, eps) -> Cell:
    cells = cfg.cells()
    if n is None and eps is None:
        return cells[0]
    if eps is not None and n is not None:
        # explicit cells outside the grid (eps = 0 or 1 included) get their own id block
        for c in cells:
            if c.n == n and math.isclose(c.eps, eps, rel_tol=1e-12, abs_tol=0.0):
                return c
        return Cell(len(cells), int(n), float(eps), cfg.lam)
    for c in cells:
        if (n is None or c.n == n) and (eps is None or math.isclose(c.eps, eps, rel_tol=1e-12)):
            return c
    raise ValueError("no such cell")


def estimate_covariance(cfg: ExperimentConfig, n: int | None = None, eps: float | None = None,
                        workers: int | None = None) -> dict:
    """Sample ``(G, T_eps G)`` pairs and estimate ``cov(f(G), f(T_eps G))``."""
    cell = _pick_cell(cfg, n, eps)
    params = derive_noise_params(cell.n, cell.lam, cell.eps)
    ids = list(range(cell.index * cfg.trials, (cell.index + 1) * cfg.trials))
    fn = _CovTrial(cfg.observable, params, cfg.master_seed)
    bits = np.array(list(_pmap(fn, ids, workers)), dtype=np.int64).reshape(-1, 2)
    out = covariance_from_bits(bits[:, 0], bits[:, 1])
    out.update(n=cell.n, eps=cell.eps)
    return out


class _CovTrial:
    def __init__(self, obs, params, seed):
        self.obs, self.params, self.seed = obs, params, seed

    def __call__(self, t):
        g = sample_gnp(self.params.n, self.params.p, stream(self.seed, t, Purpose.GRAPH))
        ge = apply_noise(g, self.params, stream(self.seed, t, Purpose.NOISE))
        return self.obs(g), self.obs(ge)


class _NestedTrial:
    def __init__(self, obs, params, seed, m):
        self.obs, self.params, self.seed, self.m = obs, params, seed, m

    def __call__(self, t):
        g0 = sample_gnp(self.params.n, self.params.p0, stream(self.seed, t, Purpose.CORE))
        hits = 0
        for k in range(self.m):
            g1 = sprinkle(g0, self.params.p1, stream(self.seed, t, Purpose.SPRINKLE_1, k))
            hits += self.obs(g1)
        return hits / self.m


def nested_means(cfg: ExperimentConfig, cell: Cell, workers=None) -> np.ndarray:
    params = derive_noise_params(cell.n, cell.lam, cell.eps)
    ids = list(range(cell.index * cfg.trials, (cell.index + 1) * cfg.trials))
    fn = _NestedTrial(cfg.observable, params, cfg.master_seed, cfg.inner_trials)
    return np.fromiter(_pmap(fn, ids, workers), dtype=float, count=len(ids))


def estimate_conditional_variance(cfg: ExperimentConfig, n: int | None = None, eps: float | None = None,
                                  workers: int | None = None) -> dict:
    """Outer cores, ``inner_trials`` sprinklings each: estimate ``Var(P(f=1 | core))``."""
    if cfg.inner_trials < 2:
        raise ValueError("inner_trials must be >= 2")
    cell = _pick_cell(cfg, n, eps)
    out = conditional_variance_from_means(nested_means(cfg, cell, workers), cfg.inner_trials)
    out.update(n=cell.n, eps=cell.eps)
    return out


def calibrate_threshold(n: int, lam: float, j: int, trials: int, master_seed: int,
                        kind: str = "size_threshold", workers=None) -> float:
    """Pilot median of ``n^{-2/3}|C_j|`` (or ``n^{-1/3} diam C_j``) so that ``P(f=1)`` is near 1/2."""
    fn = _PilotTrial(n, lam, j, master_seed, kind)
    vals = np.fromiter(_pmap(fn, list(range(trials)), workers), dtype=float, count=trials)
    return float(np.median(vals))


class _PilotTrial:
    def __init__(self, n, lam, j, seed, kind):
        self.n, self.lam, self.j, self.seed, self.kind = n, lam, j, seed, kind

    def __call__(self, t):
        p = derive_noise_params(self.n, self.lam, 0.0).p
        g = sample_gnp(self.n, p, stream(self.seed, t, Purpose.PILOT))
        d = components(g)
        if self.j > d.count:
            return 0.0
        if self.kind == "size_threshold":
            return d.sizes[self.j - 1] / self.n ** (2 / 3)
        if self.kind == "diameter_threshold":
            return distance_stats(g, d, ranks=[self.j]).diameters[0] / self.n ** (1 / 3)
        raise ValueError(f"cannot calibrate {self.kind}")


# --------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityTrial:
    a_holds: bool
    b_sup: int | None  # graph distance; None unless A_j holds
    c_holds: bool
    l2_delta: float
    ghp_bound: float | None  # only when A_j and C_j hold
    size0: int
    size1: int


def stability_events(g0: Graph, g1: Graph, j: int, d0=None, d1=None) -> StabilityTrial:
    """Events A_j, B_{j,.} (as the sup distance) and C_j for a core and its sprinkling."""
    d0 = d0 if d0 is not None else components(g0)
    d1 = d1 if d1 is not None else components(g1)
    n = g0.n
    l2 = l2_distance(size_vector(d0), size_vector(d1))
    if j > d0.count:
        return StabilityTrial(False, None, False, l2, None, 0, 0)
    k = d0.members(j)
    a_holds = j <= d1.count and bool(np.all(d1.labels[k] == j - 1))
    p0, i0 = g0.csr
    p1, i1 = g1.csr
    in_k = np.zeros(n, dtype=np.bool_)
    in_k[k] = True
    attach = k[(p1[k + 1] - p1[k]) > (p0[k + 1] - p0[k])]
    c_holds = bool(K.distances_preserved(p0, i0, p1, i1, in_k, attach))
    b_sup = None
    bound = None
    big = d1.members(j) if j <= d1.count else np.empty(0, dtype=np.int64)
    if a_holds:
        dist = K.multi_source_bfs(p1, i1, k)
        b_sup = int(dist[big].max())
        if c_holds:
            scale, mass = n ** (-1 / 3), n ** (-2 / 3)
            sub = MeasuredMetricSpace(np.full(k.size, mass), graph=g0, vertices=k, length_scale=scale)
            sup = MeasuredMetricSpace(np.full(big.size, mass), graph=g1, vertices=big, length_scale=scale)
            emb = np.searchsorted(big, k)
            bound = ghp_upper_embedded(sub, sup, emb, check=False)
    return StabilityTrial(a_holds, b_sup, c_holds, l2, bound, int(k.size), int(big.size))


def _stability_record(cfg, cell, params, trial_id) -> TrialRecord:
    g0 = sample_gnp(params.n, params.p0, stream(cfg.master_seed, trial_id, Purpose.CORE))
    g1 = sprinkle(g0, params.p1, stream(cfg.master_seed, trial_id, Purpose.SPRINKLE_1))
    d0, d1 = components(g0), components(g1)
    st = stability_events(g0, g1, cfg.j, d0, d1)
    a = _graph_summary(g0, d0, cfg.aux_distances)
    b = _graph_summary(g1, d1, cfg.aux_distances)
    return TrialRecord(
        trial_id, params.n, params.eps, cfg.observable(g0, d0), cfg.observable(g1, d1), st.l2_delta,
        a[0], b[0], a[1], b[1], a[2], b[2], a[3], b[3],
        st.a_holds, st.c_holds, st.b_sup, st.ghp_bound,
    )


class _StabTrial:
    def __init__(self, params, j, seed):
        self.params, self.j, self.seed = params, j, seed

    def __call__(self, t):
        g0 = sample_gnp(self.params.n, self.params.p0, stream(self.seed, t, Purpose.CORE))
        g1 = sprinkle(g0, self.params.p1, stream(self.seed, t, Purpose.SPRINKLE_1))
        return stability_events(g0, g1, self.j)


def stability_diagnostics(params: NoiseParams, trials: int, delta: float, j: int, rng: int,
                          workers: int | None = None) -> dict:
    """Frequencies of A_j, B_{j,delta}, C_j and the ``||dX||_2`` / GHP-bound samples.

    ``rng`` is the master seed; trial ``t`` uses its own derived streams.
    """
    fn = _StabTrial(params, j, int(rng))
    res = list(_pmap(fn, list(range(trials)), workers))
    return summarize_stability(res, delta, params.n)


def summarize_stability(res: list[StabilityTrial], delta: float, n: int) -> dict:
    a = np.array([r.a_holds for r in res])
    c = np.array([r.c_holds for r in res])
    b = np.array([r.a_holds and r.b_sup <= delta * n ** (1 / 3) for r in res])
    l2 = np.array([r.l2_delta for r in res])
    ghp = np.array([r.ghp_bound for r in res if r.ghp_bound is not None])
    return {
        "trials": len(res),
        "freq_A": float(a.mean()),
        "freq_B": float(b.mean()),
        "freq_A_not_B": float((a & ~b).mean()),
        "freq_C": float(c.mean()),
        "freq_AC": float((a & c).mean()),
        "l2_delta": l2,
        "l2_delta_median": float(np.median(l2)),
        "b_sup": [r.b_sup for r in res],
        "ghp_bound": ghp,
        # trials outside A_j and C_j have no certified bound; count them as infinite
        "ghp_bound_median": float(np.median(np.concatenate([ghp, np.full(len(res) - ghp.size, np.inf)]))),
    }


# --------------------------------------------------------------------------
# runner


def _write_records(path: Path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow(r.row())


def _cell_summary(cfg: ExperimentConfig, cell: Cell, recs: list[TrialRecord]) -> dict:
    f = np.array([r.f_g for r in recs])
    g = np.array([r.f_geps for r in recs])
    l2 = np.array([r.x_l2_delta for r in recs])
    out = {"n": cell.n, "eps": cell.eps, "eps_scaled": cell.eps_scaled, "lambda": cell.lam,
           **covariance_from_bits(f, g),
           "x_l2_delta_median": float(np.median(l2)), "x_l2_delta_mean": float(l2.mean())}
    if cfg.mode == "stability":
        a = np.array([r.a_j_holds for r in recs])
        c = np.array([r.c_j_holds for r in recs])
        b = np.array([bool(r.a_j_holds) and r.b_sup <= cfg.delta * cell.n ** (1 / 3) for r in recs])
        ghp = [r.ghp_bound if r.ghp_bound is not None else math.inf for r in recs]
        out.update(freq_A=float(a.mean()), freq_B=float(b.mean()), freq_C=float(c.mean()),
                   ghp_bound_median=float(np.median(ghp)))
    return out


def _plots(out: Path, cfg: ExperimentConfig, cells, summaries, records) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "critnoise"
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for n in cfg.n_grid:
        rows = [s for s in summaries if s["n"] == n]
        ax.errorbar([s["eps_scaled"] for s in rows], [s["corr_hat"] for s in rows],
                    yerr=[s["corr_std_err"] for s in rows], marker="o", capsize=3, label=f"n={n}")
    ax.set_xscale("log")
    ax.set_xlabel(r"$\epsilon n^{1/3}$")
    ax.set_ylabel("correlation")
    ax.legend()
    fig.tight_layout()
    fig.savefig(plots / "correlation.svg", metadata={"Date": None})
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for cell in cells:
        vals = [r.x_l2_delta for r in records if cell_of(cfg, r.trial_id).index == cell.index]
        ax.hist(vals, bins=40, histtype="step", label=f"n={cell.n}, eps={cell.eps:.3g}")
    ax.set_xlabel(r"$\|X(G)-X(G')\|_2$")
    ax.set_ylabel("trials")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(plots / "l2_delta.svg", metadata={"Date": None})
    plt.close(fig)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> Path:
    """Run every cell and write ``records.csv``, ``summary.json`` and ``plots/``."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not cfg.observable.calibrated:
        a = calibrate_threshold(cfg.n_grid[0], cfg.lam, cfg.observable.j, cfg.pilot_trials,
                                cfg.master_seed, cfg.observable.kind, workers)
        log.info("calibrated threshold a=%g", a)
        cfg = cfg.with_observable(dataclasses.replace(cfg.observable, a=a))
    cells = cfg.cells()
    ids = list(range(len(cells) * cfg.trials))
    partial = out / "records.partial.csv"
    records = []
    with open(partial, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for rec in _pmap(_TrialFn(cfg), ids, workers):
            records.append(rec)
            w.writerow(rec.row())
            fh.flush()
    records.sort(key=lambda r: r.trial_id)
    _write_records(out / "records.csv", records)
    partial.unlink()

    summaries = []
    for cell in cells:
        recs = records[cell.index * cfg.trials:(cell.index + 1) * cfg.trials]
        s = _cell_summary(cfg, cell, recs)
        if cfg.inner_trials >= 2 and cfg.mode == "sensitivity":
            s["conditional_variance"] = conditional_variance_from_means(
                nested_means(cfg, cell, workers), cfg.inner_trials)
        summaries.append(s)
    summary = {"schema_version": SCHEMA_VERSION, "config": cfg.to_dict(),
               "record_columns": list(RECORD_COLUMNS), "cells": summaries}
    with open(out / "summary.json", "w") as fh:
        json.dump(_finite_or_null(summary), fh, indent=2, sort_keys=True, default=_json_default, allow_nan=False)
        fh.write("\n")
    _plots(out, cfg, cells, summaries, records)
    return out


def _finite_or_null(obj):
    """Replace nan and inf by None so the summary stays strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite_or_null(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_null(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite_or_null(obj.tolist())
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def records_csv_text(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()
