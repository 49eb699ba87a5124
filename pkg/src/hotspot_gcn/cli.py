"""Command-line driver: one subcommand per pipeline stage plus synth/ablate/run."""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, PipelineConfig, load_config
from .evalmap import compute_metrics
from .gcn import predict_proba, train
from .graph import normalize_adjacency
from .pipeline import STAGES, MissingPrerequisite, Workspace, load_dataset, load_graph, run_all, run_stage
from .synth import SyntheticConfig, synth_generate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PREREQ = 3
EXIT_RUNTIME = 4

WORKDIR_ENV = "HOTSPOT_GCN_WORKDIR"

log = logging.getLogger("hotspot_gcn")


def ablate(cfg: PipelineConfig, hidden_dims=(64, 128, 256), layers=(2, 3), dropouts=(0.3, 0.5),
           lrs=(0.01, 0.001)) -> str:
    """Sweep GCN settings on the existing graph artifacts; CSV text with one row per config."""
    ws = Workspace(cfg)
    g, _ = load_graph(ws)
    ds, _ = load_dataset(ws)
    adj = normalize_adjacency(g)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["config", "hidden_dim", "layers", "dropout", "learning_rate", "macro_f1",
                "accuracy", "train_time_s", "params", "best_epoch"])
    for k, (h, nl, p, lr) in enumerate(itertools.product(hidden_dims, layers, dropouts, lrs), 1):
        gc = copy.deepcopy(cfg.gcn)
        gc.hidden_dims = [h] * (nl - 1)
        gc.dropout, gc.learning_rate = p, lr
        t0 = time.perf_counter()
        params, hist = train(ds, adj, gc)
        elapsed = time.perf_counter() - t0
        pred = np.argmax(predict_proba(params, adj, ds.features), axis=1)
        m = compute_metrics(pred, ds.labels, ds.test_mask, ds.n_classes)
        w.writerow([k, h, nl, p, lr, f"{m.macro_f1:.4f}", f"{m.accuracy:.4f}", f"{elapsed:.2f}",
                    params.n_parameters(), hist.best_epoch])
        log.info("ablation %d: hidden=%d layers=%d dropout=%g lr=%g -> macro-F1 %.4f",
                 k, h, nl, p, lr, m.macro_f1)
    return out.getvalue()


def _ints(text):
    return tuple(int(x) for x in text.split(","))


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hotspot-gcn", description=__doc__)
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    parser.add_argument("--work-dir", help=f"artifact directory (default ${WORKDIR_ENV} or config)")
    parser.add_argument("--overwrite", action="store_true",
                        help="allow a work dir that holds artifacts from another config")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, help=f"run the {stage} stage")
    sub.add_parser("run", help="run every stage in order")
    sub.add_parser("show-config", help="print the effective configuration")

    sp = sub.add_parser("synth", help="write a synthetic CSV in the Chicago layout")
    sp.add_argument("--out", required=True)
    sp.add_argument("--events", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--missing-fraction", type=float, default=0.01)

    ap = sub.add_parser("ablate", help="sweep GCN hyperparameters, write a CSV")
    ap.add_argument("--hidden", type=_ints, default=(64, 128, 256))
    ap.add_argument("--layers", type=_ints, default=(2, 3))
    ap.add_argument("--dropout", type=_floats, default=(0.3, 0.5))
    ap.add_argument("--lr", type=_floats, default=(0.01, 0.001))
    ap.add_argument("--out", help="CSV path (default: work dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            text = synth_generate(SyntheticConfig(seed=args.seed, n_events=args.events,
                                                  missing_fraction=args.missing_fraction))
            Path(args.out).write_text(text)
            return EXIT_OK
        cfg = load_config(args.config, args.overrides)
        work_dir = args.work_dir or os.environ.get(WORKDIR_ENV)
        if work_dir:
            cfg.paths.work_dir = work_dir
        if args.command == "show-config":
            sys.stdout.write(cfg.to_text())
            return EXIT_OK
        if args.command == "run":
            sys.stdout.write(run_all(cfg, args.overwrite))
        elif args.command == "ablate":
            text = ablate(cfg, args.hidden, args.layers, args.dropout, args.lr)
            out = Path(args.out) if args.out else Workspace(cfg).path("ablation", "csv")
            out.write_text(text)
            print(out)
        else:
            result = run_stage(args.command, cfg, args.overwrite)
            if isinstance(result, str):
                sys.stdout.write(result)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingPrerequisite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
