"""Command line entry point: ``spotsearch {explore,bench,serve,oracle}``.

Exit codes: 0 on success, 2 on invalid flags or config, 1 on runtime failure.
Set ``SPOTSEARCH_LOG`` (e.g. ``DEBUG``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from spotsearch import bench
from spotsearch.geometry import POLICIES, sample_directions
from spotsearch.hoo import DEPTH_LIMITS, VARIANTS, HooExplorer, HooParams
from spotsearch.protocol import RemoteScorer, serve
from spotsearch.scorers import grid_oracle, load_scene

logger = logging.getLogger("spotsearch")

EXPLORE_COLUMNS = bench.LONG_COLUMNS + ("depth", "node_index", "x", "y", "z", "best_direction")


class UsageError(Exception):
    """Invalid flags or configuration (exit code 2)."""


def _positive_int(flag: str, value: int) -> None:
    if value < 1:
        raise UsageError(f"{flag} must be >= 1, got {value}")


def _load_scene(path: str):
    try:
        return load_scene(path)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"--scene {path}: {exc}") from exc


def _hoo_params(args) -> HooParams:
    _positive_int("--iters", args.iters)
    _positive_int("--ndir", args.ndir)
    if not args.c > 0:
        raise UsageError(f"--c must be positive, got {args.c}")
    if not args.v1 > 0:
        raise UsageError(f"--v1 must be positive, got {args.v1}")
    if not 0 < args.rho <= 1:
        raise UsageError(f"--rho must lie in (0, 1], got {args.rho}")
    if args.depth_limit == "formula" and args.rho == 1:
        raise UsageError("--depth-limit formula needs --rho < 1")
    return HooParams(
        c=args.c,
        nu1=args.v1,
        rho=args.rho,
        horizon=args.iters,
        n_dir=args.ndir,
        depth_limit=args.depth_limit,
        division_policy=args.policy,
        variant=args.variant,
        seed=args.seed,
    )


def _explore_rows(log, scene: str, variant: str, seed: int):
    status = "ok" if log.complete else "aborted"
    for rec in log.records:
        yield {
            "scene": scene,
            "variant": variant,
            "seed": seed,
            "iteration": rec.iteration,
            "reward": rec.reward,
            "cum_max": rec.best_so_far,
            "cum_mean": rec.mean_so_far,
            "status": status,
            "depth": rec.node.depth,
            "node_index": rec.node.index,
            "x": rec.position[0],
            "y": rec.position[1],
            "z": rec.position[2],
            "best_direction": rec.best_direction,
        }


def cmd_explore(args) -> int:
    scene = _load_scene(args.scene)
    params = _hoo_params(args)
    if args.remote:
        try:
            scorer = RemoteScorer.from_endpoint(args.remote)
        except ValueError as exc:
            raise UsageError(f"--remote: {exc}") from exc
    else:
        scorer = scene
    try:
        log = HooExplorer(params, scorer, scene.bounds).run()
    finally:
        if args.remote:
            scorer.close()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = Path(args.scene).stem
    rows = list(_explore_rows(log, name, params.describe(), params.seed))
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, EXPLORE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        (out / "explore_log.csv").write_text(buf.getvalue(), encoding="utf-8")
    else:
        doc = {"params": _params_dict(params), "complete": log.complete, "error": log.error, "records": rows}
        (out / "explore_log.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    if not log.records:
        print(f"exploration failed before the first evaluation: {log.error}", file=sys.stderr)
        return 1
    best = log.best()
    direction = sample_directions(params.n_dir)[best.best_direction]
    report = {
        "scene": name,
        "params": _params_dict(params),
        "iterations": len(log),
        "complete": log.complete,
        "error": log.error,
        "best_score": best.reward,
        "best_position": list(best.position),
        "best_direction_index": best.best_direction,
        "best_direction": [float(v) for v in direction],
        "best_iteration": best.iteration,
        "best_node": [best.node.depth, best.node.index],
        "final_cum_mean": log.records[-1].mean_so_far,
    }
    (out / "explore_best.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"best score: {best.reward!r}")
    print(f"best position: {list(best.position)}")
    print(f"best direction index: {best.best_direction}")
    if not log.complete:
        print(f"exploration aborted after {len(log)} iterations: {log.error}", file=sys.stderr)
        return 1
    return 0


def _params_dict(params: HooParams) -> dict:
    return {
        "c": params.c,
        "nu1": params.nu1,
        "rho": params.rho,
        "horizon": params.horizon,
        "n_dir": params.n_dir,
        "depth_limit": params.depth_limit,
        "division_policy": params.division_policy,
        "variant": params.variant,
        "seed": params.seed,
    }


def cmd_bench(args) -> int:
    if args.ablation:
        _positive_int("--seeds", args.seeds)
        try:
            result = bench.ablation_suite(seeds=range(args.seeds))
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        paths = result.write(args.out, prefix="ablation")
    else:
        try:
            config = bench.load_bench_config(args.config, output=None)
        except (OSError, ValueError, TypeError) as exc:
            raise UsageError(f"--config {args.config}: {exc}") from exc
        for p in config.scenes:
            _load_scene(str(p))
        result = bench.run_bench(config)
        paths = result.write(args.out)
    for p in paths:
        print(p)
    failed = [r for r in result.runs if not r.log.complete]
    if failed:
        print(f"{len(failed)} run(s) aborted", file=sys.stderr)
        return 1
    return 0


def cmd_serve(args) -> int:
    scene = _load_scene(args.scene)
    if not 0 <= args.port <= 65535:
        raise UsageError(f"--port must lie in [0, 65535], got {args.port}")

    def ready(address):
        print(f"listening on {address[0]}:{address[1]}", flush=True)

    serve(scene, args.host, args.port, ready=ready)
    return 0


def cmd_oracle(args) -> int:
    scene = _load_scene(args.scene)
    if args.resolution < 2:
        raise UsageError(f"--resolution must be >= 2, got {args.resolution}")
    _positive_int("--ndir", args.ndir)
    score, position = grid_oracle(scene, args.resolution, args.ndir)
    print(f"best score: {score!r}")
    print(f"best position: {list(position)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        doc = {"resolution": args.resolution, "n_dir": args.ndir, "best_score": score, "best_position": list(position)}
        (out / "oracle.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spotsearch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="run the HOO explorer on one scene")
    p.add_argument("--scene", required=True, help="scene config (JSON)")
    p.add_argument("--remote", metavar="HOST:PORT", help="score through a running scoring server")
    p.add_argument("--iters", type=int, default=500, help="horizon N (default 500)")
    p.add_argument("--c", type=float, default=0.2, help="exploration weight c (default 0.2)")
    p.add_argument("--rho", type=float, default=0.5, help="smoothness decay rho (default 0.5)")
    p.add_argument("--v1", type=float, default=0.5, help="smoothness scale nu1 (default 0.5)")
    p.add_argument("--ndir", type=int, default=15, help="directions per region (default 15)")
    p.add_argument("--policy", choices=POLICIES, default="softmax", help="axis division policy")
    p.add_argument("--variant", choices=VARIANTS, default="truncated", help="HOO variant")
    p.add_argument("--depth-limit", choices=DEPTH_LIMITS, default="inf", help="tree depth cap")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="per-iteration log format")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("bench", help="compare explorers over a scene suite")
    p.add_argument("--config", default=str(bench.DEFAULT_CONFIG), help="bench config (JSON); default: shipped suite")
    p.add_argument("--ablation", action="store_true", help="run the ablation sweep on the shipped suite instead")
    p.add_argument("--seeds", type=int, default=5, help="seeds for --ablation (default 5)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="serve a scene over the binary scoring protocol")
    p.add_argument("--scene", required=True, help="scene config (JSON)")
    p.add_argument("--host", default="127.0.0.1", help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=5555, help="TCP port, 0 picks a free one (default 5555)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("oracle", help="brute-force grid maximum of a scene")
    p.add_argument("--scene", required=True, help="scene config (JSON)")
    p.add_argument("--resolution", type=int, default=64, help="grid cells per axis (default 64)")
    p.add_argument("--ndir", type=int, default=15, help="directions per cell (default 15)")
    p.add_argument("--out", help="optional output directory for oracle.json")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPOTSEARCH_LOG", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"spotsearch {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.debug("runtime failure", exc_info=True)
        print(f"spotsearch {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
