"""Command line entry point: ``multinav train|eval|replay|serve``.

Exit codes: 0 success, 2 usage error, 3 invalid config, 4 missing or
unreadable checkpoint, 5 runtime failure during training, 6 validation
failure (replay mismatch).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import checkpoint as ckpt
from .config import ConfigError, load_config, save_config

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_RUNTIME, EXIT_VALIDATION = 0, 2, 3, 4, 5, 6


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multinav", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--profile", choices=["desk", "paper"])
    common.add_argument("--deterministic", action="store_true",
                        help="mean actions instead of sampling (eval/serve)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="run the two-stage curriculum")
    t.add_argument("--iterations", type=int, help="override curriculum.total_iterations")
    t.add_argument("--scratch", action="store_true", help="disable the curriculum")
    t.add_argument("--resume", help="checkpoint to continue from")

    e = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", default="random_empty")
    e.add_argument("--robots", type=int, default=4)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--log", help="write a trajectory CSV here")

    r = sub.add_parser("replay", parents=[common], help="re-execute a trajectory log")
    r.add_argument("--log", required=True)

    s = sub.add_parser("serve", parents=[common], help="serve a checkpoint over TCP")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8765)
    return p


def _config(args):
    overrides = {"seed": args.seed, "output_dir": args.out, "profile": args.profile}
    if getattr(args, "scratch", False) or getattr(args, "iterations", None):
        from .config import from_dict
        base = load_config(args.config, **overrides).to_dict()
        cur = base["curriculum"]
        if args.scratch:
            cur["enabled"] = False
        if args.iterations:
            cur["total_iterations"] = args.iterations
        return from_dict(base)
    return load_config(args.config, **overrides)


def _train(args) -> int:
    from .ppo import TrainingError
    from .train import load_checkpoint, run_curriculum, save_checkpoint
    cfg = _config(args)
    state = None
    if args.resume:
        state = load_checkpoint(args.resume)
        cfg = state.config.replace(output_dir=cfg.output_dir)
        state.config = cfg
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    save_config(cfg, os.path.join(out, "effective_config.yaml"))
    try:
        state = run_curriculum(cfg, state=state, out_dir=out)
    except TrainingError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    last = state.history[-1] if state.history else {}
    print(f"trained iterations={state.iteration} stage={int(state.stage)} "
          f"final_reward={last.get('mean_episode_reward', float('nan')):.4f} out={out}")
    return EXIT_OK


def _eval(args) -> int:
    from .evaluate import TrajectoryLog, evaluate_policy, export_trajectories
    from .scenarios import scenario
    from .train import load_checkpoint
    state = load_checkpoint(args.checkpoint)
    seed = args.seed if args.seed is not None else 0
    spec = scenario(args.scenario, args.robots)
    log = TrajectoryLog() if args.log else None
    summary = evaluate_policy(state, spec, args.episodes, seed,
                              deterministic=True if args.deterministic else False, log=log)
    if log is not None:
        export_trajectories(log, args.log)
    print(summary.summary_line())
    return EXIT_OK


def _replay(args) -> int:
    from .evaluate import read_trajectories, replay
    log = read_trajectories(args.log)
    if not log.meta:
        print(f"no metadata sidecar {args.log}.json", file=sys.stderr)
        return EXIT_CONFIG
    ok, message = replay(log)
    print(message)
    return EXIT_OK if ok else EXIT_VALIDATION


def _serve(args) -> int:
    from .server import serve
    serve(args.checkpoint, args.host, args.port)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    handler = {"train": _train, "eval": _eval, "replay": _replay, "serve": _serve}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ckpt.CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT


if __name__ == "__main__":
    sys.exit(main())
