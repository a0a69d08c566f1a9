"""Command-line surface.

Subcommands: inject, train, score, eval, curvature-stats, gradcheck, sweep.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from trigad.config import (config_hash, default_config, load_config,
                           set_option)
from trigad.curvature import (curvature_histogram, edge_classes,
                              mixed_curvature_table, ot_backend_name)
from trigad.evaluate import (anomaly_report, combine_scores, rank_nodes,
                             read_scores_csv, write_histogram_csv,
                             write_report, write_scores_csv)
from trigad.graph import InjectionConfig, inject_anomalies, load_graph, \
    normalize_adjacency, save_graph
from trigad.training import (load_trained, orchestrate, run_gradcheck_suite,
                             score_channels, train_unified)

GRADCHECK_TOLERANCE = 1e-4


def _load_cfg(args):
    return load_config(args.config) if args.config else default_config()


def _cmd_inject(args) -> int:
    g = load_graph(args.edges, args.attrs)
    inj = InjectionConfig(clique_count=args.cliques,
                          clique_size=args.clique_size,
                          attr_anom_count=args.attr_count,
                          candidate_pool=args.pool,
                          mixed_count=args.mixed,
                          seed=args.seed)
    perturbed = inject_anomalies(g, inj)
    os.makedirs(args.out_dir, exist_ok=True)
    save_graph(perturbed,
               os.path.join(args.out_dir, "edges.txt"),
               os.path.join(args.out_dir, "attrs.csv"),
               os.path.join(args.out_dir, "labels.txt"))
    counts = np.bincount(perturbed.labels, minlength=4)
    print(f"wrote {args.out_dir}: n={perturbed.n} "
          f"normal={counts[0]} attr={counts[1]} structure={counts[2]} "
          f"mixed={counts[3]}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    g = load_graph(args.edges, args.attrs)
    os.makedirs(args.out_dir, exist_ok=True)
    runner = train_unified if args.unified else orchestrate
    result = runner(g, cfg, out_dir=args.out_dir)
    mode = result.manifest["mode"]
    print(f"trained ({mode}, ot backend: {ot_backend_name()}) -> "
          f"{args.out_dir}")
    return 0


def _cmd_score(args) -> int:
    cfg = _load_cfg(args)
    g = load_graph(args.edges, args.attrs, args.labels)
    attr_model, struct_model, mix_model = load_trained(
        cfg, g.d, args.ckpt_dir, unified=args.unified)
    table = mixed_curvature_table(g, cfg.mix.delta)
    adj = normalize_adjacency(g)
    channel_scores = score_channels(
        attr_model, struct_model, mix_model, g, table,
        cfg.train.score_batch, adj, cfg.struct.enhanced_own_iterates)
    lambdas = (cfg.eval.lambda_attr, cfg.eval.lambda_struct,
               cfg.eval.lambda_mix)
    combined = combine_scores(channel_scores[:, 0], channel_scores[:, 1],
                              channel_scores[:, 2], lambdas)
    ranks = rank_nodes(combined)
    write_scores_csv(args.out, channel_scores, combined, ranks, g.labels)
    print(f"wrote {args.out} ({g.n} nodes)")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    channel_scores, _, _, labels = read_scores_csv(args.scores)
    lambdas = (cfg.eval.lambda_attr, cfg.eval.lambda_struct,
               cfg.eval.lambda_mix)
    report = anomaly_report(channel_scores, lambdas, labels, k=args.k,
                            seed=args.seed, config_digest=config_hash(cfg))
    write_report(args.out, report)
    if report["metrics"] is not None:
        m = report["metrics"]
        print(f"auc_roc={m['auc_roc']:.4f} auc_pr={m['auc_pr']:.4f} "
              f"macro_f1={m['macro_f1']:.4f}")
    else:
        print("no labels in scores file; report has no metrics")
    return 0


def _cmd_curvature_stats(args) -> int:
    g = load_graph(args.edges, args.attrs, args.labels)
    table = mixed_curvature_table(g, args.delta)
    classes = edge_classes(table, g.labels)
    edges_path = args.out_prefix + "-edges.csv"
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("i,j,kappa_raw,kappa_norm,edge_class\n")
        for (i, j), raw, norm, cls in zip(table.edges, table.kappa_raw,
                                          table.kappa_norm, classes):
            fh.write(f"{i},{j},{float(raw)!r},{float(norm)!r},{cls}\n")
    hist = curvature_histogram(table, g.labels, bins=args.bins)
    write_histogram_csv(args.out_prefix + "-histogram.csv", hist)
    for cls in ("nn", "na", "aa"):
        sel = table.kappa_norm[classes == cls]
        hist[f"mean_{cls}"] = float(sel.mean()) if sel.size else None
    with open(args.out_prefix + "-histogram.json", "w",
              encoding="utf-8") as fh:
        json.dump(hist, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"wrote {edges_path} and histogram files "
          f"({table.edges.shape[0]} edges)")
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_gradcheck_suite(seed=args.seed)
    worst = 0.0
    for name, err in results:
        status = "ok" if err < GRADCHECK_TOLERANCE else "FAIL"
        print(f"{name:20s} {err:12.3e}  {status}")
        worst = max(worst, err)
    print(f"worst relative error: {worst:.3e} "
          f"(tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if worst < GRADCHECK_TOLERANCE else 1


def _parse_grid(specs: list[str]) -> list[tuple[str, list[str]]]:
    grid = []
    for spec in specs:
        if "=" not in spec:
            raise ValueError(f"--grid expects section.key=v1,v2 got {spec!r}")
        key, values = spec.split("=", 1)
        values = [v for v in values.split(",") if v]
        if not values:
            raise ValueError(f"--grid {spec!r} lists no values")
        grid.append((key.strip(), values))
    return grid


def _cmd_sweep(args) -> int:
    base_cfg = _load_cfg(args)
    g = load_graph(args.edges, args.attrs, args.labels)
    grid = _parse_grid(args.grid)
    os.makedirs(args.out_dir, exist_ok=True)
    cells = list(itertools.product(*(values for _, values in grid)))
    keys = [key for key, _ in grid]

    def run_cell(item):
        index, values = item
        cfg = copy.deepcopy(base_cfg)
        assignment = dict(zip(keys, values))
        for key, raw in assignment.items():
            set_option(cfg, key, raw)
        cfg.train.seed = args.seed + index
        cfg.validate()
        result = orchestrate(g, cfg)
        channel_scores = score_channels(
            result.attr_model, result.struct_model, result.mix_model, g,
            result.table, cfg.train.score_batch, result.adj,
            cfg.struct.enhanced_own_iterates)
        lambdas = (cfg.eval.lambda_attr, cfg.eval.lambda_struct,
                   cfg.eval.lambda_mix)
        report = anomaly_report(channel_scores, lambdas, g.labels,
                                seed=cfg.train.seed,
                                config_digest=config_hash(cfg))
        report["metadata"]["sweep_cell"] = {"index": index,
                                            "assignment": assignment}
        name = f"report-{index:03d}.json"
        write_report(os.path.join(args.out_dir, name), report)
        return {"index": index, "assignment": assignment, "report": name,
                "metrics": report["metrics"]}

    items = list(enumerate(cells))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(run_cell, items))
    else:
        rows = [run_cell(item) for item in items]
    manifest = {"grid": {key: values for key, values in grid},
                "cells": rows, "base_seed": args.seed}
    with open(os.path.join(args.out_dir, "sweep.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(f"swept {len(rows)} cells -> {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trigad",
        description="Triple-channel graph anomaly detection: masked "
                    "attribute, structure, and curvature reconstruction "
                    "with sequential mutual distillation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="perturb a clean graph with labeled "
                                      "anomalies")
    p.add_argument("--edges", required=True)
    p.add_argument("--attrs", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--cliques", type=int, default=0)
    p.add_argument("--clique-size", type=int, default=15)
    p.add_argument("--attr-count", type=int, default=0)
    p.add_argument("--pool", type=int, default=50)
    p.add_argument("--mixed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("train", help="run the training workflow, write "
                                     "checkpoints and a manifest")
    p.add_argument("--edges", required=True)
    p.add_argument("--attrs", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--unified", action="store_true",
                   help="joint-loss baseline instead of sequential phases")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("score", help="score every node with trained "
                                     "checkpoints")
    p.add_argument("--edges", required=True)
    p.add_argument("--attrs", required=True)
    p.add_argument("--labels")
    p.add_argument("--ckpt-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--unified", action="store_true")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("eval", help="metrics and a full report from a "
                                    "scores CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--k", type=int, default=None,
                   help="contamination for macro F1 (default: true count)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("curvature-stats", help="per-edge curvature CSV and "
                                               "class histogram")
    p.add_argument("--edges", required=True)
    p.add_argument("--attrs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=_cmd_curvature_stats)

    p = sub.add_parser("gradcheck", help="verify every backward pass against "
                                         "finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("sweep", help="grid search; one report per cell")
    p.add_argument("--edges", required=True)
    p.add_argument("--attrs", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", action="append", required=True,
                   metavar="section.key=v1,v2")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage errors and --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
