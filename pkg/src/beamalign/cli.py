"""Command-line entry point: train / evaluate / baseline / beampattern / selftest.

Exit codes: 0 success, 2 configuration error, 3 training failure,
4 checkpoint/policy mismatch.  All outputs are byte-identical for a
fixed config and seed; wall-clock timestamps only ever go to the
``run.log`` sidecar.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config, resolved_text
from .harness import (
    ANALYTIC_BASELINES,
    TRAINABLE_POLICIES,
    beam_patterns_from_trace,
    evaluate,
    generate_channels,
    make_policy,
    train,
    write_metric_csv,
)
from .numerics import Rng
from .nn.checkpoint import CheckpointError, checkpoint_load, checkpoint_save, load_into_store
from .protocol import run_episode
from .selftest import run_selftest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAIN = 3
EXIT_ARTIFACT = 4

_META_KEY = "meta.policy_id"


def _encode_policy_id(name: str) -> np.ndarray:
    return np.frombuffer(name.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def _decode_policy_id(arr: np.ndarray) -> str:
    return bytes(arr.astype(np.uint8)).decode("utf-8")


def _log_line(out_dir: str, message: str) -> None:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(os.path.join(out_dir, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {message}\n")


def _prepare(cfg: RunConfig) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "config.resolved.ini"), "w", encoding="ascii") as fh:
        fh.write(resolved_text(cfg))


def _load_checkpoint_into(policy, path: str, expected_policy: str) -> None:
    _, tables = checkpoint_load(path)
    meta = tables[3].get(_META_KEY)
    if meta is not None and _decode_policy_id(meta) != expected_policy:
        raise CheckpointError(
            f"checkpoint was trained for policy {_decode_policy_id(meta)!r}, "
            f"config asks for {expected_policy!r}"
        )
    load_into_store(policy.store, path)


def cmd_train(cfg: RunConfig) -> int:
    if cfg.policy not in TRAINABLE_POLICIES:
        print(f"config error: policy {cfg.policy!r} is not trainable "
              f"(trainable: {', '.join(TRAINABLE_POLICIES)})", file=sys.stderr)
        return EXIT_CONFIG
    _prepare(cfg)
    _log_line(cfg.out_dir, f"train start policy={cfg.policy}")
    try:
        policy = make_policy(cfg.spec, cfg.policy)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = train(cfg.spec, policy)

    policy.store.buffers.pop(_META_KEY, None)
    policy.store.create_buffer(_META_KEY, _encode_policy_id(cfg.policy))
    ckpt = os.path.join(cfg.out_dir, "checkpoint.ckpt")
    checkpoint_save(policy.store, ckpt)

    with open(os.path.join(cfg.out_dir, "learning_curve.csv"), "w", encoding="ascii") as fh:
        fh.write("step,train_loss,val_gain_db\n")
        for p in result.curve:
            val = "" if p.val_gain_db is None else f"{p.val_gain_db:.12g}"
            loss = "" if np.isnan(p.train_loss) else f"{p.train_loss:.12g}"
            fh.write(f"{p.step},{loss},{val}\n")

    if result.diverged:
        _log_line(cfg.out_dir, f"train diverged at step {result.steps_run}; "
                               "last-good checkpoint saved")
        print(f"training diverged at step {result.steps_run}; "
              f"best checkpoint kept at {ckpt}", file=sys.stderr)
        return EXIT_TRAIN
    _log_line(cfg.out_dir, f"train done steps={result.steps_run} "
                           f"best_val_db={result.best_val_gain_db:.3f}")
    print(f"trained {cfg.policy}: {result.steps_run} steps, "
          f"best validation gain {result.best_val_gain_db:.3f} dB -> {ckpt}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, checkpoint: str | None) -> int:
    name = cfg.policy
    learned = name in TRAINABLE_POLICIES
    if learned and checkpoint is None:
        print(f"artifact error: policy {name!r} needs --checkpoint", file=sys.stderr)
        return EXIT_ARTIFACT
    if not learned and checkpoint is not None:
        print(f"artifact error: analytic policy {name!r} takes no checkpoint", file=sys.stderr)
        return EXIT_ARTIFACT
    _prepare(cfg)
    policy = None
    try:
        if learned:
            policy = make_policy(cfg.spec, name)
            _load_checkpoint_into(policy, checkpoint, name)
    except CheckpointError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _log_line(cfg.out_dir, f"evaluate start policy={name}")
    try:
        row = evaluate(cfg.spec, name, policy=policy)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = os.path.join(cfg.out_dir, "metrics.csv")
    write_metric_csv([row], out)
    _log_line(cfg.out_dir, "evaluate done")
    print(f"{name}: {row.mean_gain_db:.3f} dB mean gain "
          f"(stderr {row.stderr_db:.4f} dB, n={row.n}) -> {out}")
    return EXIT_OK


def cmd_baseline(cfg: RunConfig, name: str) -> int:
    valid = ANALYTIC_BASELINES + ("power-iteration-noisy",)
    if name not in valid:
        print(f"config error: unknown baseline {name!r}; valid: {', '.join(valid)}",
              file=sys.stderr)
        return EXIT_CONFIG
    if name == "bcd" and cfg.spec.mode != "ris":
        print("config error: bcd baseline requires experiment.mode = ris", file=sys.stderr)
        return EXIT_CONFIG
    if name in ("bisection", "power-iteration", "power-iteration-noisy", "omp") and cfg.spec.mode != "direct":
        print(f"config error: {name} baseline requires experiment.mode = direct", file=sys.stderr)
        return EXIT_CONFIG
    if name == "random-ris-csi" and cfg.spec.mode != "ris":
        print("config error: random-ris-csi requires experiment.mode = ris", file=sys.stderr)
        return EXIT_CONFIG
    _prepare(cfg)
    _log_line(cfg.out_dir, f"baseline start name={name}")
    row = evaluate(cfg.spec, name)
    out = os.path.join(cfg.out_dir, f"baseline_{name}.csv")
    write_metric_csv([row], out)
    _log_line(cfg.out_dir, "baseline done")
    print(f"{name}: {row.mean_gain_db:.3f} dB mean gain "
          f"(stderr {row.stderr_db:.4f} dB, n={row.n}) -> {out}")
    return EXIT_OK


def cmd_beampattern(cfg: RunConfig, checkpoint: str | None, channel_seed: int) -> int:
    name = cfg.policy
    if name in TRAINABLE_POLICIES:
        if checkpoint is None:
            print(f"artifact error: policy {name!r} needs --checkpoint", file=sys.stderr)
            return EXIT_ARTIFACT
    elif checkpoint is not None:
        print(f"artifact error: analytic policy {name!r} takes no checkpoint", file=sys.stderr)
        return EXIT_ARTIFACT
    _prepare(cfg)
    try:
        policy = make_policy(cfg.spec, name)
        if checkpoint is not None:
            _load_checkpoint_into(policy, checkpoint, name)
    except CheckpointError as exc:
        print(f"artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _log_line(cfg.out_dir, f"beampattern start policy={name} channel_seed={channel_seed}")
    chan = generate_channels(cfg.spec, Rng(channel_seed), 1)[0]
    trace = run_episode(cfg.spec.protocol(), chan, policy, Rng(cfg.spec.eval_seed))
    tables = beam_patterns_from_trace(trace)
    for key, table in tables.items():
        path = os.path.join(cfg.out_dir, f"pattern_{key}.csv")
        with open(path, "w", encoding="ascii") as fh:
            fh.write("angle_deg,response\n")
            for ang, resp in table:
                fh.write(f"{ang:.12g},{resp:.12g}\n")
    _log_line(cfg.out_dir, "beampattern done")
    print(f"wrote {len(tables)} pattern files to {cfg.out_dir}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamalign",
        description="Two-sided beam alignment and RIS reflection design with ping-pong pilots.",
        epilog=(
            "Environment overrides: BEAMALIGN_OUTDIR replaces output.dir, "
            "BEAMALIGN_WORKERS replaces evaluate.workers."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=False, help="key=value config file with sections")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override any config key (repeatable)")

    p = sub.add_parser("train", help="train the configured policy, save a checkpoint")
    common(p)
    p = sub.add_parser("evaluate", help="Monte Carlo gain of the configured policy")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint file (required for learned policies)")
    p = sub.add_parser("baseline", help="evaluate an analytic baseline")
    common(p)
    p.add_argument("--name", required=True, help="baseline name")
    p = sub.add_parser("beampattern", help="export per-round beam patterns on one channel")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint file (for learned policies)")
    p.add_argument("--channel-seed", type=int, default=0)
    sub.add_parser("selftest", help="run the built-in gradient and oracle checks")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "selftest":
        return EXIT_OK if run_selftest() else 1
    try:
        cfg = load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "train":
        return cmd_train(cfg)
    if args.command == "evaluate":
        return cmd_evaluate(cfg, args.checkpoint)
    if args.command == "baseline":
        return cmd_baseline(cfg, args.name)
    if args.command == "beampattern":
        return cmd_beampattern(cfg, args.checkpoint, args.channel_seed)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
