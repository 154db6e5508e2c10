"""Command-line entry points.

Subcommands: eval-nngp, eval-train, rank, pqetp, screen, hybrid, report.
Evaluation commands exit non-zero if any per-architecture item failed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import experiment, metrics, screening


def _load_config(args, **overrides) -> experiment.ExperimentConfig:
    if args.config:
        cfg = experiment.config_from_file(args.config, **overrides)
    else:
        cfg = experiment.ExperimentConfig(**overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "archs", None):
        cfg = replace(cfg, arch_file=args.archs)
    if getattr(args, "data_dir", None):
        cfg = replace(cfg, data_dir=args.data_dir, dataset="cifar")
    return cfg


def _run_and_exit(cfg) -> int:
    result = experiment.run_experiment(cfg)
    print(f"report: {result['report']}")
    if "metrics" in result:
        print(f"metrics: {result['metrics']}")
    for failure in result["failures"]:
        print(f"FAILED {failure['key']}: {failure['error']}", file=sys.stderr)
    return 1 if result["failures"] else 0


def cmd_eval_nngp(args) -> int:
    cfg = _load_config(args)
    cfg = replace(cfg, epoch_budgets=())
    return _run_and_exit(cfg)


def cmd_eval_train(args) -> int:
    cfg = _load_config(args)
    cfg = replace(cfg, nngp_triples=())
    return _run_and_exit(cfg)


def _pairs_from_report(path, proxy_name, truth_name):
    rows = experiment.read_report(path)
    proxy = experiment.report_scores(rows, proxy_name)
    truth = experiment.report_scores(rows, truth_name)
    ids = sorted(set(proxy) & set(truth))
    if len(ids) < 2:
        raise SystemExit(f"fewer than two architectures carry both "
                         f"{proxy_name!r} and {truth_name!r}")
    return metrics.ScorePairSet(np.array([proxy[i] for i in ids]),
                                np.array([truth[i] for i in ids]),
                                ids=tuple(ids))


def cmd_rank(args) -> int:
    pairs = _pairs_from_report(args.report, args.proxy, args.truth)
    print(f"n={len(pairs)}")
    print(f"kendall_tau={metrics.kendall_tau(pairs):.6f}")
    print(f"pearson={metrics.pearson(pairs):.6f}")
    print(f"discovered_k{args.k}="
          f"{metrics.discovered_performance(pairs, min(args.k, len(pairs))):.6f}")
    return 0


def cmd_pqetp(args) -> int:
    pairs = _pairs_from_report(args.report, args.proxy, args.truth)
    if args.scan:
        start, stop, step = args.scan
        thresholds = list(np.arange(start, stop + step / 2, step))
    else:
        thresholds = [float(np.percentile(pairs.truth, p))
                      for p in experiment.PQETP_PERCENTILES]
    for p_t in thresholds:
        try:
            value = metrics.pqetp(pairs, p_t)
            print(f"p_T={p_t:.6f} auroc={value:.6f}")
        except Exception as exc:
            print(f"p_T={p_t:.6f} skipped ({exc})")
    return 0


def _pool_from_report(path, nngp_proxy, train_proxy=None, truth_proxy=None):
    rows = experiment.read_report(path)
    nngp = experiment.report_scores(rows, nngp_proxy)
    short = experiment.report_scores(rows, train_proxy) if train_proxy else {}
    truth = experiment.report_scores(rows, truth_proxy) if truth_proxy else {}
    entries = []
    for arch_id in sorted(nngp):
        entries.append(screening.PoolEntry(
            arch_id, nngp_score=nngp[arch_id],
            short_train_score=short.get(arch_id),
            truth_score=truth.get(arch_id),
            provenance={"report": path}))
    return screening.SearchPool(tuple(entries))


def cmd_screen(args) -> int:
    pool = _pool_from_report(args.report, args.proxy)
    log = screening.screening_log(pool, args.keep)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("arch_id", "rank", "kept"))
        for arch_id, rank, kept in log:
            writer.writerow((arch_id, rank, int(kept)))
    kept = sum(1 for _, _, k in log if k)
    print(f"kept {kept}/{len(log)} -> {args.out}")
    return 0


def cmd_hybrid(args) -> int:
    pool = _pool_from_report(args.report, args.nngp_proxy, args.train_proxy,
                             args.target_proxy)
    target = pool.scores("truth_score")
    model = screening.fit_hybrid(pool, target)
    print(f"w_train={model.w_train:.6f} w_nngp={model.w_nngp:.6f} "
          f"bias={model.bias:.6f}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("arch_id", "hybrid_score"))
            for entry in pool.entries:
                writer.writerow((entry.arch_id,
                                 repr(screening.hybrid_score(model, entry))))
        print(f"scores -> {args.out}")
    return 0


def cmd_report(args) -> int:
    out_dir = args.out or "runs"
    rows = experiment.checkpoint_rows(out_dir)
    path = os.path.join(out_dir, "report.csv")
    experiment.write_report(path, rows)
    print(f"report: {path} ({len(rows)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpnas",
        description="Score architectures by Monte-Carlo kernel GP inference "
                    "and compare against shortened training.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")
        if data:
            p.add_argument("--archs", help="newline-delimited architecture JSON file")
            p.add_argument("--data-dir", help="CIFAR-10 binary batch directory")

    p = sub.add_parser("eval-nngp", help="kernel-score architectures")
    common(p)
    p.set_defaults(fn=cmd_eval_nngp)

    p = sub.add_parser("eval-train", help="shortened-training baseline")
    common(p)
    p.set_defaults(fn=cmd_eval_train)

    p = sub.add_parser("rank", help="rank correlation between two proxies")
    p.add_argument("--report", required=True)
    p.add_argument("--proxy", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(fn=cmd_rank)

    p = sub.add_parser("pqetp", help="threshold-exceedance AUROC curve")
    p.add_argument("--report", required=True)
    p.add_argument("--proxy", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--scan", nargs=3, type=float, metavar=("START", "STOP", "STEP"))
    p.set_defaults(fn=cmd_pqetp)

    p = sub.add_parser("screen", help="keep the top fraction by kernel score")
    p.add_argument("--report", required=True)
    p.add_argument("--proxy", required=True)
    p.add_argument("--keep", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_screen)

    p = sub.add_parser("hybrid", help="fit the linear hybrid metric")
    p.add_argument("--report", required=True)
    p.add_argument("--train-proxy", required=True)
    p.add_argument("--nngp-proxy", required=True)
    p.add_argument("--target-proxy", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_hybrid)

    p = sub.add_parser("report", help="rebuild report.csv from checkpoints")
    p.add_argument("--out", help="run directory holding checkpoints/")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
