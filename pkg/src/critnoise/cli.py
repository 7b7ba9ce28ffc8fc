"""Command line entry point ``critnoise``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from . import analytics as A
from .coalescent import check_aldous_conditions, check_bbsw_conditions, coalescent_params, sample_W
from .experiments import ExperimentConfig, run_experiment
from .graphs import (apply_noise, derive_noise_params, eps_for_theta, sample_gnp,
                     sample_sprinkling_triple, sprinkle)
from .io import write_edge_list
from .metric import MeasuredMetricSpace, ghp_exact, ghp_same_points_bound
from .oracles import sample_excursions, write_excursions_csv
from .rng import Purpose, stream

log = logging.getLogger("critnoise")


def _print(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else float(o))
    sys.stdout.write("\n")


def _eps(args, n):
    if args.eps is not None:
        return args.eps
    if args.theta is not None:
        return eps_for_theta(n, args.lam, args.theta)
    raise SystemExit("need --eps or --theta")


def cmd_sample(args) -> int:
    out = Path(args.out)
    n = args.n
    if args.kind == "gnp":
        p = derive_noise_params(n, args.lam, 0.0).p
        write_edge_list(out, sample_gnp(n, p, stream(args.seed, args.trial, Purpose.GRAPH)))
        return 0
    params = derive_noise_params(n, args.lam, _eps(args, n))
    if args.kind == "noise":
        g = sample_gnp(n, params.p, stream(args.seed, args.trial, Purpose.GRAPH))
        ge = apply_noise(g, params, stream(args.seed, args.trial, Purpose.NOISE))
        write_edge_list(out.with_name(out.name + ".g"), g)
        write_edge_list(out.with_name(out.name + ".geps"), ge)
        return 0
    t = sample_sprinkling_triple(params, tuple(stream(args.seed, args.trial, p)
                                               for p in (Purpose.CORE, Purpose.SPRINKLE_1, Purpose.SPRINKLE_2)))
    for suffix, g in (("g0", t.g0), ("g1", t.g1), ("g1p", t.g1_prime)):
        write_edge_list(out.with_name(f"{out.name}.{suffix}"), g)
    return 0


def _load_config(args, mode):
    cfg = ExperimentConfig.load(args.config)
    changes = {"mode": mode}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.output_dir is not None:
        changes["output_dir"] = args.output_dir
    return dataclasses.replace(cfg, **changes)


def cmd_experiment(mode):
    def run(args) -> int:
        try:
            cfg = _load_config(args, mode)
        except (OSError, ValueError, TypeError, KeyError) as exc:
            print(f"critnoise: invalid config: {exc}", file=sys.stderr)
            return 2
        try:
            out = run_experiment(cfg, workers=args.workers)
        except OSError as exc:
            print(f"critnoise: I/O failure: {exc}", file=sys.stderr)
            return 3
        print(out)
        return 0
    return run


def cmd_subcritical(args) -> int:
    n, theta = args.n, args.theta
    p0 = (1.0 - theta) / n
    c1, diam_ok, s2, s3, z = [], [], [], [], []
    bound = A.subcritical_diameter_bound(theta, n)
    for t in range(args.trials):
        g = sample_gnp(n, p0, stream(args.seed, t, Purpose.CORE))
        d = A.components(g)
        c1.append(int(d.sizes[0]))
        s2.append(A.susceptibility(d, 2))
        s3.append(A.susceptibility(d, 3))
        if args.distances:
            ds = A.distance_stats(g, d)
            z.append(ds.z_total)
            diam_ok.append(ds.d_max < bound)
    rate = -theta - math.log1p(-theta)
    center = A.subcritical_center(theta, n)
    out = {
        "n": n, "theta": theta, "xi": theta**3 * n, "trials": args.trials,
        "c1_median": float(np.median(c1)), "c1_center": center, "c1_window": 5.0 / rate,
        "s2_mean": float(np.mean(s2)), "s2_first_order": n / theta,
        "s3_mean": float(np.mean(s3)), "s3_first_order": n / theta**3,
    }
    if args.distances:
        out.update(z_mean=float(np.mean(z)), z_first_order=(1 - theta) / theta**2 * n,
                   diameter_bound=bound, diameter_below_bound=float(np.mean(diam_ok)))
    _print(out)
    return 0


def _core(args):
    params = derive_noise_params(args.n, args.lam, _eps(args, args.n))
    g0 = sample_gnp(params.n, params.p0, stream(args.seed, args.trial, Purpose.CORE))
    return params, g0, A.components(g0)


def cmd_coalescent(args) -> int:
    params, g0, d0 = _core(args)
    x, q, _ = coalescent_params(g0, params.p1, d0)
    top_w = np.empty(args.draws)
    top_g = np.empty(args.draws)
    for k in range(args.draws):
        top_w[k] = sample_W(x, q, stream(args.seed, args.trial, Purpose.AUX, k)).component_weights[0]
        g1 = sprinkle(g0, params.p1, stream(args.seed, args.trial, Purpose.SPRINKLE_1, k))
        top_g[k] = A.components(g1).sizes[0] / params.n ** (2 / 3)
    ks = ks_2samp(top_w, top_g)
    out = {"n": params.n, "eps": params.eps, "draws": args.draws,
           "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue)}
    if params.eps3n > 1:
        rep = check_aldous_conditions(x, q, params.lam, params.eps, params.n)
        out["aldous"] = json.loads(rep.to_json())
    _print(out)
    return 0


def cmd_bbsw(args) -> int:
    params, g0, d0 = _core(args)
    x, q, _ = coalescent_params(g0, params.p1, d0)
    ds = A.distance_stats(g0, d0)
    rep = check_bbsw_conditions(x, ds.u_per_component, ds.d_max, q, params.eps, params.n,
                                eta0=args.eta0, r0=args.r0)
    _print({"holds": rep.holds, **json.loads(rep.to_json())})
    return 0


def cmd_excursions(args) -> int:
    seqs = [sample_excursions(args.lam, args.T, args.dt, stream(args.seed, t, Purpose.AUX))
            for t in range(args.paths)]
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_excursions_csv(fh, seqs)
    else:
        write_excursions_csv(sys.stdout, seqs)
    return 0


def cmd_ghp(args) -> int:
    a = MeasuredMetricSpace.from_json(Path(args.a).read_text())
    b = MeasuredMetricSpace.from_json(Path(args.b).read_text())
    if args.mode == "same-points":
        value = ghp_same_points_bound(a, b)
    else:
        try:
            value = ghp_exact(a, b)
        except ValueError as exc:
            print(f"critnoise: {exc}", file=sys.stderr)
            return 2
    _print({"mode": args.mode, "value": value})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critnoise", description="Noise experiments on critical random graphs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--lam", type=float, default=0.0)
        p.add_argument("--trial", type=int, default=0, help="trial id selecting the random streams")

    p = sub.add_parser("sample", help="write one graph, noised pair or sprinkling triple as edge lists")
    common(p)
    p.add_argument("--kind", choices=("gnp", "noise", "triple"), default="gnp")
    p.add_argument("--eps", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--out", required=True, help="output path (suffixes added for pairs and triples)")
    p.set_defaults(func=cmd_sample)

    for name, mode in (("sensitivity", "sensitivity"), ("stability", "stability")):
        p = sub.add_parser(name, help=f"run a {mode} experiment from a JSON config")
        p.add_argument("config")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--output-dir")
        p.add_argument("--workers", type=int, help="process count (default: $CRITNOISE_WORKERS or 1)")
        p.set_defaults(func=cmd_experiment(mode))

    p = sub.add_parser("subcritical-stats", help="component statistics of G(n, (1-theta)/n)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--distances", action="store_true", help="also compute Z and diameters")
    p.set_defaults(func=cmd_subcritical)

    checks = (("coalescent-check", cmd_coalescent, "coalescent entrance conditions and a KS check against sprinkling"),
              ("bbsw-check", cmd_bbsw, "metric entrance conditions of one core"))
    for name, func, text in checks:
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--eps", type=float)
        p.add_argument("--theta", type=float)
        if func is cmd_coalescent:
            p.add_argument("--draws", type=int, default=1000)
        else:
            p.add_argument("--eta0", type=float, default=0.25)
            p.add_argument("--r0", type=float, default=8.0)
        p.set_defaults(func=func)

    p = sub.add_parser("excursions", help="excursion lengths of the reflected drifted path as CSV")
    p.add_argument("--lam", type=float, default=0.0)
    p.add_argument("--T", type=float, default=20.0)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_excursions)

    p = sub.add_parser("ghp", help="compare two measured metric spaces stored as JSON")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mode", choices=("exact", "same-points"), default="exact")
    p.set_defaults(func=cmd_ghp)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
