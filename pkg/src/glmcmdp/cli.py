"""Command line entry point: ``glmcmdp run | gen-env | inspect``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .harness import ExperimentConfig, appendix_f_config, emit_results, hard_instance_config, run_experiment
from .env import generate_benchmark, generate_hard_instance


def _cmd_run(args) -> dict:
    cfg = ExperimentConfig.load(args.config)
    if args.seeds:
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    if args.out:
        cfg.output_dir = args.out
    t0 = time.perf_counter()
    results = run_experiment(cfg, workers=args.workers)
    paths = emit_results(cfg, results, wall_clock=time.perf_counter() - t0)
    return {"status": "ok", "files": {k: str(v) for k, v in paths.items()}}


def _cmd_gen_env(args) -> dict:
    if args.preset == "appendix-f":
        cfg = appendix_f_config()
        cfg.env.seed = args.seed
        truth = generate_benchmark(cfg.env)
    else:
        e = hard_instance_config().env
        truth = generate_hard_instance(e.S, e.A, e.H, e.d, args.epsilon, e.link_kind)
    truth.save(args.out)
    return {"status": "ok", "file": args.out, "S": truth.S, "A": truth.A, "d": truth.d}


def _describe(value):
    if isinstance(value, list):
        arr = np.asarray(value, dtype=object)
        return f"array{list(arr.shape)}" if arr.ndim > 1 or len(value) > 8 else value
    if isinstance(value, dict):
        return {k: _describe(v) for k, v in value.items()}
    return value


def _cmd_inspect(args) -> dict:
    data = json.loads(Path(args.checkpoint).read_text())
    info = {"status": "ok", "file": args.checkpoint}
    if data.get("type") == "agent":
        visits = [[o["t"] for o in row] for row in data["ons"]]
        info.update(
            type="agent",
            agent=data["agent"],
            version=data["version"],
            dims=data["dims"],
            link=data["link"],
            config=data["config"],
            total_transitions=int(np.sum(visits)),
            visits=visits,
        )
    else:
        info.update({k: _describe(v) for k, v in data.items()})
    return info


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="glmcmdp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--seeds", help="comma separated seeds, overrides the config")
    r.add_argument("--out", help="output directory, overrides the config")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("gen-env", help="write a CMDP truth to JSON")
    g.add_argument("--preset", choices=["appendix-f", "hard-instance"], required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epsilon", type=float, default=0.1)
    g.set_defaults(func=_cmd_gen_env)

    i = sub.add_parser("inspect", help="summarise an agent or estimator checkpoint")
    i.add_argument("--checkpoint", required=True)
    i.set_defaults(func=_cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        result = args.func(args)
    except Exception as exc:
        err = {"status": "error", "command": args.command, "error": type(exc).__name__, "message": str(exc)}
        for attr in ("episode", "seed"):
            if getattr(exc, attr, None) is not None:
                err[attr] = getattr(exc, attr)
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
