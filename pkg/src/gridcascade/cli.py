"""Command-line entry point: ``gridcascade <stage> ...`` or ``gridcascade all --config run.json``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__, pipeline
from .errors import GridCascadeError, ValidationError
from .grid import TOPOLOGIES

log = logging.getLogger("gridcascade")


def _workers(args) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    env = os.environ.get("GRIDCASCADE_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValidationError(f"GRIDCASCADE_WORKERS must be an integer (got {env!r})") from exc
    return 1


def _split(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad split {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed (default 0)")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes; output does not depend on it")
    common.add_argument("--precision", choices=("f32", "f64"), default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    ap = argparse.ArgumentParser(prog="gridcascade", parents=[common], description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, help):
        return sub.add_parser(name, parents=[common], help=help)

    p = cmd("synth", "write a synthetic network")
    p.add_argument("--buses", type=int, required=True)
    p.add_argument("--topology", choices=TOPOLOGIES, default="random-regular")
    p.add_argument("--margin", type=float, default=1.5, help="line capacity / base-case |flow|")
    p.add_argument("--load-scale", type=float, default=100.0)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--out", required=True)

    p = cmd("generate", "simulate cascades from random initial outages")
    p.add_argument("--network", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=8)
    p.add_argument("--out", required=True)

    p = cmd("transform", "split traces and convert them to training pairs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--n-lines", type=int, required=True)
    p.add_argument("--gmax", type=int, default=20)
    p.add_argument("--split", type=_split, default=(0.6, 0.2, 0.2))
    p.add_argument("--out-dir", required=True)

    p = cmd("train", "train the encoder on a transformed data directory")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--config", help="JSON mirroring the model config; may name a profile")
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="write the loss history here as JSON")

    p = cmd("eval", "F1 of a checkpoint on a pair file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)

    p = cmd("extract", "accumulate ICM/PCM from last-layer attention")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out-dir", required=True)

    p = cmd("rank", "rank Initiatives and Passives from ICM/PCM")
    p.add_argument("--icm", required=True)
    p.add_argument("--pcm", required=True)
    p.add_argument("--out", required=True)

    p = cmd("baselines", "BC, CFBC and LODF rankings")
    p.add_argument("--network", required=True)
    p.add_argument("--out", required=True)

    p = cmd("evaluate", "compare rankings on held-out traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--ranks", required=True)
    p.add_argument("--baselines", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--top-x", type=pipeline.parse_top_x, default=(1, 2, 3, 4, 5, 6, 7, 8, 9, 10))
    p.add_argument("--random-rank", type=int, metavar="SEED", help="also score a uniformly random rank")
    p.add_argument("--out-dir", required=True)

    p = cmd("all", "run the whole pipeline from a JSON config")
    p.add_argument("--config", help="run config JSON; defaults are used for missing keys")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--force", action="store_true", help="ignore cached stage outputs")
    return ap


def run(args) -> None:
    seed = getattr(args, "seed", 0)
    workers = _workers(args)
    c = args.command
    if c == "synth":
        pipeline.synth_stage(args.out, args.buses, seed, topology=args.topology, capacity_margin=args.margin,
                             load_scale=args.load_scale, degree=args.degree)
    elif c == "generate":
        pipeline.generate_stage(args.network, args.out, args.samples, args.k_min, args.k_max, seed, workers)
    elif c == "transform":
        m = pipeline.transform_stage(args.dataset, args.out_dir, args.n_lines, args.gmax, args.split, seed)
        log.info("pairs: %s", m["pairs"])
    elif c == "train":
        doc = pipeline.read_json(args.config) if args.config else {"profile": "desk"}
        cfg = pipeline.model_config(doc, args.data_dir, getattr(args, "seed", None), getattr(args, "precision", None))
        h = pipeline.train_stage(args.data_dir, cfg, args.out, args.history)
        log.info("train loss %.4f -> %.4f", h["train_loss"][0], h["train_loss"][-1])
    elif c == "eval":
        doc = pipeline.eval_stage(args.model, args.data, args.report)
        log.info("F1 %.4f over %d pairs", doc["f1"]["f1"], doc["pairs"])
    elif c == "extract":
        pipeline.extract_stage(args.model, args.data, args.out_dir, workers)
    elif c == "rank":
        pipeline.rank_stage(args.icm, args.pcm, args.out)
    elif c == "baselines":
        pipeline.baselines_stage(args.network, args.out)
    elif c == "evaluate":
        pipeline.evaluate_stage(args.traces, args.ranks, args.baselines, args.network, args.out_dir, args.top_x,
                                args.random_rank)
    elif c == "all":
        doc = pipeline.read_json(args.config) if args.config else {}
        if "seed" in args:
            doc["seed"] = args.seed
        m = pipeline.run_pipeline(doc, args.out_dir, workers, args.force, getattr(args, "precision", None))
        for s in m.stages:
            log.info("%-10s %s %.1f s", s.name, "cached" if s.skipped else "ran   ", s.wall_time)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        run(args)
    except GridCascadeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
