"""CLI: `dt train` fits a checkpoint on a token directory, `dt infer`
rolls out a new schedule from a checkpoint and a recent snapshot."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__


def cmd_train(args) -> int:
    from .train import TrainConfig, train

    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      lr=args.lr, seed=args.seed,
                      target_accuracy=args.target_accuracy)
    overrides = {}
    if args.layers:
        overrides["n_layers"] = args.layers
    if args.heads:
        overrides["n_heads"] = args.heads
    if args.embed:
        overrides["n_embed"] = args.embed
    metrics = train(args.tokens, args.out, cfg, overrides)
    print(f"trained {metrics['epochs']} epochs in {metrics['seconds']:.1f}s, "
          f"training accuracy {metrics['accuracy']:.3f} -> {args.out}")
    return 0


def cmd_infer(args) -> int:
    import time

    from .model import load_checkpoint
    from .rollout import infer_schedule, pick_snapshot, save_policy

    path = args.snapshot
    index = None
    if ":" in path and path.rsplit(":", 1)[1].isdigit():
        path, idx = path.rsplit(":", 1)
        index = int(idx)
    _, payload = load_checkpoint(args.ckpt)
    snapshot = pick_snapshot(path, index, payload["norm_stats"],
                             payload["static_meta"])
    t0 = time.time()
    assignment = infer_schedule(args.ckpt, snapshot,
                                target_mult=args.target_mult)
    elapsed = time.time() - t0
    save_policy(assignment, args.out, seed=args.seed)
    print(f"rolled out {len(assignment)} slices in {elapsed:.1f}s -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from .train import evaluate_checkpoint

    metrics = evaluate_checkpoint(args.ckpt, args.tokens)
    print(json.dumps(metrics, sort_keys=True, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dt")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a checkpoint on token containers")
    sp.add_argument("--tokens", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int, default=400)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--target-accuracy", type=float, default=None)
    sp.add_argument("--layers", type=int, default=0)
    sp.add_argument("--heads", type=int, default=0)
    sp.add_argument("--embed", type=int, default=0)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("infer", help="roll out a schedule from a checkpoint")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--snapshot", required=True,
                    help="trajectory store path, optionally :<record index>")
    sp.add_argument("--target-mult", type=float, default=1.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("evaluate", help="accuracy of a checkpoint on tokens")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--tokens", required=True)
    sp.set_defaults(fn=cmd_evaluate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
