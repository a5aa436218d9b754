"""Command-line front end.

Subcommands:
  simulate    replicated discrete runs, reports to --out
  limit       tilted limit ensembles, path samples and excursion tables
  compare     discrete run against a limit ensemble (KS distances)
  check       pathwise identity suite on random instances
  clustering  Monte Carlo clustering coefficient

Configs are JSON files mirroring ExperimentConfig; see the README for the
schema.  Exit status is nonzero whenever a requested check fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checks, harness
from .graph_core import clustering_estimate
from .limit_sim import LimitParams, height_from_z, rank_excursions, simulate_z
from .weights import point_mass


def _load_config(path: str, overrides: argparse.Namespace) -> harness.ExperimentConfig:
    with open(path) as fh:
        cfg = harness.ExperimentConfig.from_dict(json.load(fh))
    if overrides.seed is not None:
        cfg.seed = overrides.seed
    if getattr(overrides, "replicates", None) is not None:
        cfg.replicates = overrides.replicates
    if getattr(overrides, "out", None) is not None:
        cfg.out_dir = overrides.out
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args)
    report = harness.run_discrete(cfg)
    out = cfg.out_dir or "bicrit-out"
    written = harness.emit(report, out)
    print(f"replicates={len(report.replicates)} "
          f"kappa_zero={report.kappa_zero_count} hash={report.content_hash()}")
    for kind, path in written.items():
        print(f"  {kind}: {path}")
    return 0


def _cmd_limit(args) -> int:
    params = LimitParams(regime=args.regime, theta=args.theta,
                         alpha=args.alpha if args.regime > 1 else 2.0,
                         c_b=args.c_b, c_w=args.c_w)
    out = args.out or "bicrit-limit"
    os.makedirs(out, exist_ok=True)
    seq = np.random.SeedSequence(args.seed)
    exc_path = os.path.join(out, "excursions.csv")
    with open(exc_path, "w") as fh:
        fh.write("path,rank,g,d,length\n")
        for i, child in enumerate(seq.spawn(args.paths)):
            path = simulate_z(params, args.horizon, args.step, child)
            for rank, exc in enumerate(rank_excursions(path)[:args.top_k], 1):
                fh.write(f"{i},{rank},{exc.g!r},{exc.d!r},{exc.length!r}\n")
            if i < args.keep_paths:
                stride = max(1, len(path.times) // 2000)
                height = height_from_z(path, params, epsilon=args.epsilon,
                                       stride=stride if params.regime > 1 else 1)
                table = np.column_stack([path.times[::stride],
                                         path.values[::stride],
                                         height.values[::stride]])
                np.savetxt(os.path.join(out, f"path{i}.csv"), table,
                           delimiter=",", header="t,value,height", comments="")
    print(f"wrote {exc_path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _load_config(args.config, args)
    report = harness.run_discrete(cfg)
    params = LimitParams.from_pair(cfg.pair())
    ensemble = harness.simulate_limit_ensemble(
        params, cfg.limit.paths, cfg.limit.horizon, cfg.limit.step,
        cfg.top_k, np.random.SeedSequence([cfg.seed, 1]))
    result = harness.compare_with_limit(report, ensemble,
                                        threshold=args.threshold)
    for k, (ky, kx) in enumerate(zip(result.ks_y, result.ks_x), 1):
        print(f"rank {k}: KS(y-mass)={ky:.4f} KS(x-mass)={kx:.4f}")
    print(f"threshold={result.threshold} passed={result.passed}")
    return 0 if result.passed else 1


def _cmd_check(args) -> int:
    results = checks.identity_suite(args.instances, seed=args.seed,
                                    max_side=args.max_side)
    fails = checks.summarize(results)
    names = sorted({o.name for res in results for o in res.outcomes})
    for name in names:
        bad = fails.get(name, 0)
        print(f"{'FAIL' if bad else 'PASS'} {name}: "
              f"{len(results) - bad}/{len(results)} instances")
    if fails:
        for res in results:
            if not res.ok:
                print(f"first failing instance: seed={res.seed} "
                      f"n={res.n} m={res.m}")
                break
        return 1
    return 0


def _cmd_clustering(args) -> int:
    est = clustering_estimate(point_mass(1.0), point_mass(1.0),
                              args.n, args.m if args.m else args.n,
                              trials=args.trials, seed=args.seed)
    if not est.defined:
        print("conditioning event never observed; estimate undefined")
        return 1
    print(f"CL={est.value:.4f} se={est.std_error:.4f} wedges={est.wedges} "
          f"graphs={est.graphs}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bicrit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="replicated discrete runs")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("limit", help="simulate limit ensembles")
    p.add_argument("--regime", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--c-b", type=float, default=1.0)
    p.add_argument("--c-w", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--top-k", type=int, default=2)
    p.add_argument("--keep-paths", type=int, default=3)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_limit)

    p = sub.add_parser("compare", help="discrete run vs limit ensemble")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("check", help="pathwise identity suite")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-side", type=int, default=50)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("clustering", help="clustering coefficient estimate")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_clustering)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
