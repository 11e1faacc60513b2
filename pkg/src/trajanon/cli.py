"""Command-line entry points: gen, merge, anonymize, verify, stats."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional

from trajanon.anonymize import AnonConfig, anonymize
from trajanon.data.dataset import (
    DomainError,
    load_published,
    read_csv,
    save_published,
    write_anonymized_csv,
    write_csv,
    write_report,
)
from trajanon.data.generate import GenConfig, add_time_noise, generate
from trajanon.data.metrics import granularity_stats, hourly_csv, run_report, suppression_rate
from trajanon.merge import kmerge
from trajanon.verify import MODES, DEFAULT_PROBES, verify

log = logging.getLogger("trajanon")


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_gen(args) -> int:
    config = GenConfig(
        users=args.users,
        days=args.days,
        rate_per_hour=args.rate,
        day_night_activity_ratio=args.day_night_ratio,
        seed=args.seed,
    )
    ds = generate(config)
    if args.time_noise:
        ds = add_time_noise(ds, args.time_noise, seed=args.seed)
    write_csv(ds, args.output)
    log.info("wrote %d samples of %d users to %s", len(ds), len(ds.trajectories), args.output)
    return 0


def cmd_merge(args) -> int:
    ds = read_csv(args.input)
    result = kmerge(list(ds.trajectories.values()), args.max_window)
    boxes = [g.box for g in result.cells]
    write_anonymized_csv({u: boxes for u in ds.users}, args.output)
    _emit(write_report({"cost": result.cost, "cells": len(boxes), "users": len(ds.users)}), args.report)
    return 0


def cmd_anonymize(args) -> int:
    ds = read_csv(args.input)
    config = AnonConfig(
        k=args.k,
        tau=args.tau_min,
        epsilon=args.epsilon_min,
        cluster_target=args.cluster_target,
        seed=args.seed,
    )
    anon, report = anonymize(ds, config, n_jobs=args.jobs)
    log_path = save_published(anon.to_published(), args.output)
    log.info("suppression log written to %s", log_path)
    _emit(write_report(report), args.report)
    return 0


def cmd_verify(args) -> int:
    raw = read_csv(args.raw)
    pub = load_published(args.anon, args.suppressed)
    report = verify(raw, pub, mode=args.mode, probes=args.probes, seed=args.seed)
    _emit(write_report(report.as_dict()), args.output)
    if args.failures:
        with open(args.failures, "w") as fh:
            fh.write(report.failures_csv())
    return 0 if report.passed else 1


def cmd_stats(args) -> int:
    raw = read_csv(args.input)
    pub = load_published(args.anon, args.suppressed)
    stats = granularity_stats(pub)
    supp = suppression_rate(raw, pub)
    _emit(hourly_csv(stats, supp), args.output)
    _emit(write_report(run_report(raw, pub)), args.report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajanon", description="Trajectory anonymization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded synthetic dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--rate", type=float, default=0.9, help="mean samples per user-hour")
    p.add_argument("--day-night-ratio", type=float, default=3.0)
    p.add_argument("--time-noise", type=int, default=0,
                   help="spread timestamps uniformly over this many slots")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("merge", help="optimally merge every trajectory of a raw CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--max-window", type=int, default=None)
    p.add_argument("--report", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("anonymize", help="run the windowed anonymization pipeline")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="anonymized CSV; the suppression log goes next to it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--tau-min", type=int, default=60)
    p.add_argument("--epsilon-min", type=int, default=60)
    p.add_argument("--cluster-target", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for clustering")
    p.add_argument("--report", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("verify", help="simulate the windowed attacker")
    p.add_argument("--raw", required=True)
    p.add_argument("--anon", required=True)
    p.add_argument("--suppressed", default=None, help="suppression log (default next to --anon)")
    p.add_argument("--mode", choices=MODES, default="exhaustive")
    p.add_argument("--probes", type=int, default=DEFAULT_PROBES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None, help="report path (default stdout)")
    p.add_argument("--failures", default=None, help="CSV of failure witnesses")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="granularity and suppression statistics")
    p.add_argument("--input", required=True, help="raw CSV")
    p.add_argument("--anon", required=True)
    p.add_argument("--suppressed", default=None)
    p.add_argument("--output", default=None, help="hourly CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=0, help="unused; accepted for uniformity")
    p.add_argument("--report", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DomainError, OSError) as exc:
        print(f"trajanon: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
