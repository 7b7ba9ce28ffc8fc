"""Reference laws: reflected Brownian excursions with parabolic drift, and
Galton-Watson tree heights with binomial offspring."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numba as nb
import numpy as np

from .rng import as_generator


@dataclass(frozen=True)
class ExcursionSequence:
    """Excursion lengths of one discretized path, largest first.

    ``starts`` holds the start time of each excursion (same order).  Grid
    points off zero are either inside a counted excursion or in a run of a
    single point; ``zero_time`` and ``short_time`` account for the rest of
    the horizon so that ``lengths.sum() + zero_time + short_time == T`` up to
    float rounding of ``steps * dt``.
    """

    lengths: np.ndarray
    starts: np.ndarray
    T: float
    dt: float
    zero_time: float
    short_time: float

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    def __len__(self):
        return int(self.lengths.size)

    def __getitem__(self, i):
        return float(self.lengths[i]) if i < self.lengths.size else 0.0


@nb.njit(cache=True)
def _excursion_runs(lam, dt, noise, path):
    """Euler scheme for ``B_t + lam t - t^2/2`` reflected at its running minimum.

    Returns run lengths and start indices (in grid steps) of maximal runs of
    at least two grid points where the reflected path is positive, plus the
    number of zero points and of isolated positive points.  ``noise`` holds
    the standard normal increments, one per step.  The reflected
    path is written to ``path`` when it has room for ``steps + 1`` values.
    """
    steps = noise.shape[0]
    store = path.shape[0] == steps + 1
    if store:
        path[0] = 0.0
    sq = math.sqrt(dt)
    w = 0.0
    lo = 0.0
    run = 0
    run_start = 0
    zeros = 0
    short = 0
    # runs of two or more points are separated by zeros
    lengths = np.empty(steps // 3 + 1, dtype=np.int64)
    starts = np.empty(steps // 3 + 1, dtype=np.int64)
    count = 0
    for k in range(1, steps + 1):
        t0 = (k - 1) * dt
        t1 = k * dt
        w += lam * dt - 0.5 * (t1 * t1 - t0 * t0) + sq * noise[k - 1]
        if w <= lo:
            lo = w
            r = 0.0
        else:
            r = w - lo
        if store:
            path[k] = r
        if r > 0.0:
            if run == 0:
                run_start = k
            run += 1
        else:
            zeros += 1
        if run > 0 and (r == 0.0 or k == steps):
            if run >= 2:
                lengths[count] = run
                starts[count] = run_start
                count += 1
            else:
                short += 1
            run = 0
    return lengths[:count], starts[:count], zeros, short


def _check_grid(T, dt):
    if dt <= 0 or T <= 0:
        raise ValueError("need T > 0 and dt > 0")
    if dt > T:
        raise ValueError("dt must not exceed T")
    steps = int(round(T / dt))
    if T < 100 * dt:
        warnings.warn(f"coarse grid: only {steps} steps", RuntimeWarning, stacklevel=3)
    return steps


def sample_excursions(lam: float, T: float, dt: float, rng, return_path: bool = False):
    """One path's excursion sequence; with ``return_path`` also the reflected path."""
    steps = _check_grid(T, dt)
    rng = as_generator(rng)
    path = np.empty(steps + 1 if return_path else 0)
    runs, starts, zeros, short = _excursion_runs(float(lam), float(dt), rng.standard_normal(steps), path)
    order = np.argsort(-runs, kind="stable")
    seq = ExcursionSequence(runs[order] * dt, starts[order] * dt, float(T), float(dt), zeros * dt, short * dt)
    return (seq, path) if return_path else seq


def largest_excursions(lam: float, T: float, dt: float, count: int, rng) -> np.ndarray:
    """``lengths[0]`` of ``count`` independent paths (0 when a path has none)."""
    rng = as_generator(rng)
    out = np.empty(count)
    for i in range(count):
        seq = sample_excursions(lam, T, dt, rng)
        out[i] = seq[0]
    return out


def write_excursions_csv(fh, sequences, trial_ids=None) -> None:
    """Rows ``trial_id, rank, length`` with 1-based rank."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["trial_id", "rank", "length"])
    for t, seq in enumerate(sequences):
        tid = t if trial_ids is None else trial_ids[t]
        for r, length in enumerate(seq.lengths, start=1):
            w.writerow([tid, r, repr(float(length))])


def _gw_inv_a(n: float, mu: float, k: int) -> float:
    """``1/a_k``, evaluated without forming ``mu^{-k}``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    keep = 1.0 - mu / n if math.isfinite(n) else 1.0
    if mu == 1.0:
        return 1.0 / (1.0 + keep * k)
    if mu < 1.0:
        # a_k = 1 + keep (mu^{-k} - 1)/(1 - mu); multiply through by (1 - mu) mu^k
        t = math.exp(k * math.log(mu))
        head = (1.0 - mu) * t
        return head / (head + keep * -math.expm1(k * math.log(mu)))
    return 1.0 / (1.0 + keep * -math.expm1(-k * math.log(mu)) / (mu - 1.0))


def gw_height_bounds(n: float, mu: float, k: int) -> tuple[float, float]:
    """``(1/a_k, 2/a_k)`` bracketing ``P(height >= k)`` for Bin(n, mu/n) offspring.

    ``n`` may be ``math.inf`` for the Poisson limit.  The upper value is
    clipped at 1, which matters once ``a_k < 2``.
    """
    inv = _gw_inv_a(n, mu, k)
    return inv, min(2.0 * inv, 1.0)


def sample_gw_height(n: int, mu: float, k_cap: int, rng) -> int:
    """Height of one Bin(n, mu/n) Galton-Watson tree, capped at ``k_cap``."""
    if mu > n:
        raise ValueError("need mu <= n")
    rng = as_generator(rng)
    p = mu / n
    z, h = 1, 0
    while h < k_cap:
        z = int(rng.binomial(n * z, p))
        if z == 0:
            break
        h += 1
    return h


def gw_survival_count(n: int, mu: float, k: int, trees: int, rng) -> int:
    """Number of ``trees`` independent trees with ``height >= k``."""
    if mu > n:
        raise ValueError("need mu <= n")
    rng = as_generator(rng)
    p = mu / n
    z = np.ones(trees, dtype=np.int64)
    for _ in range(k):
        z = rng.binomial(n * z, p)
        z = z[z > 0]
        if z.size == 0:
            return 0
    return int(z.size)
