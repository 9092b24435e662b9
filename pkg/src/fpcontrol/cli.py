"""Command-line entry point: ``fpcontrol {train,eval,bench,track}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import struct
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .bench import (
    Condition,
    LQRDriver,
    PerfectFollower,
    PolicyDriver,
    format_velocity_report,
    run_benchmark,
    run_tracking,
    standard_conditions,
    velocity_report,
)
from .config import ConfigError, SuiteConfig
from .lqr import DareError, LQRController
from .ppo.trainer import Policy, TrainingError, train
from .tracker import SHAPES, PathSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SOLVER = 4
EXIT_TRAINING = 5

logger = logging.getLogger("fpcontrol")

# convenience flags -> dotted config paths
SHORTCUTS = {
    "train": {"task": "task.kind", "epochs": "ppo.epochs", "num_envs": "ppo.num_envs"},
    "eval": {"controller": "bench.controller", "n_traj": "bench.n_traj", "length": "bench.length"},
    "bench": {"controller": "bench.controller", "conditions": "bench.conditions",
              "n_traj": "bench.n_traj", "length": "bench.length"},
    "track": {"controller": "tracker.controller", "shape": "tracker.shape", "speed": "tracker.target_speed",
              "lookahead": "tracker.lookahead_r", "size": "tracker.size", "steps": "tracker.steps"},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpcontrol", description="Floating-platform control suite")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "train a PPO policy",
        "eval": "evaluate one controller under the configured disturbance",
        "bench": "run the disturbance benchmark table",
        "track": "follow a reference shape with velocity commands",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="YAML or JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="cap on BLAS worker threads")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted config override, e.g. ppo.epochs=10 (repeatable)")
        p.add_argument("-v", "--verbose", action="store_true")
        for flag in SHORTCUTS[name]:
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, help=f"alias for {SHORTCUTS[name][flag]}")
    return parser


def resolve_config(args) -> SuiteConfig:
    cfg = SuiteConfig.load(args.config) if args.config else SuiteConfig()
    overrides = list(args.overrides)
    for flag, path in SHORTCUTS[args.command].items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{path}={value}")
    for flag in ("seed", "out", "threads"):
        value = getattr(args, flag)
        if value is not None:
            overrides.append({flag: value})
    cfg = cfg.with_overrides(overrides)
    if args.command == "track" and cfg["tracker"]["shape"] not in SHAPES[:3]:
        raise ConfigError(f"unknown shape {cfg['tracker']['shape']!r}; valid shapes: {', '.join(SHAPES[:3])}")
    return cfg


def make_driver(spec: str, cfg: SuiteConfig):
    """``lqr``, ``rl:<checkpoint>`` or ``perfect``."""
    kind, _, arg = spec.partition(":")
    if kind == "lqr":
        ctrl = LQRController(weights=cfg.lqr_weights(), params=cfg.platform_params(), **cfg.lqr_kwargs())
        return LQRDriver(ctrl.fit())
    if kind == "rl":
        if not arg:
            raise ConfigError("rl controller needs a checkpoint: rl:<path>")
        try:
            return PolicyDriver(Policy.load(arg))
        except (ValueError, struct.error) as exc:
            raise OSError(f"cannot load checkpoint {arg}: {exc}") from exc
    if kind == "perfect":
        return PerfectFollower()
    raise ConfigError(f"unknown controller {spec!r}; use lqr, rl:<checkpoint> or perfect")


def parse_controllers(text: str, cfg: SuiteConfig) -> dict:
    drivers = {}
    for spec in (s.strip() for s in text.split(",") if s.strip()):
        label = "RL" if spec.startswith("rl") else spec.upper() if spec == "lqr" else spec
        if label in drivers:
            label = spec
        drivers[label] = make_driver(spec, cfg)
    if not drivers:
        raise ConfigError("no controller given")
    return drivers


def parse_conditions(text: str) -> list:
    presets = {c.label.lower().replace(" ", ""): c for c in standard_conditions()}
    if text == "table2":
        return standard_conditions()
    out = []
    for name in (s.strip() for s in text.split(",") if s.strip()):
        key = name.lower().replace(" ", "")
        if key not in presets:
            raise ConfigError(f"unknown condition {name!r}; valid: table2, {', '.join(presets)}")
        out.append(presets[key])
    return out


def cmd_train(cfg: SuiteConfig, out: Path) -> int:
    ppo = cfg["ppo"]
    train(
        task=cfg["task"]["kind"],
        cfg=cfg.ppo_config(),
        seed=cfg["seed"],
        params=cfg.platform_params(),
        reward_cfg=cfg.reward_cfg(),
        ranges=cfg.ranges(),
        episode_len=cfg["task"]["episode_len"],
        uf_range=tuple(ppo["train_uf_range"]),
        log_path=out / "train_log.csv",
        checkpoint_path=out / "checkpoint.bin",
        checkpoint_every=ppo["checkpoint_every"],
        callback=lambda row: logger.info("epoch %d return %.2f", row["epoch"], row["mean_return"]),
    )
    print(f"wrote {out / 'checkpoint.bin'} and {out / 'train_log.csv'}")
    return EXIT_OK


def _bench(cfg: SuiteConfig, out: Path, conditions, stem: str) -> int:
    b = cfg["bench"]
    drivers = parse_controllers(b["controller"], cfg)
    table = run_benchmark(drivers, conditions, b["n_traj"], b["length"], cfg["seed"], cfg.platform_params(),
                          keep_trajectories=b["dump_trajectories"])
    table.write_csv(out / f"{stem}.csv")
    table.write_json(out / f"{stem}.json")
    text = table.to_text()
    (out / f"{stem}.txt").write_text(text)
    if b["dump_trajectories"]:
        _dump_trajectories(table, out / f"{stem}_trajectories.csv")
    print(text, end="")
    return EXIT_OK


def _dump_trajectories(table, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["condition", "controller", "traj", "t", "x", "y", "theta", "vx", "vy", "omega"]
                   + [f"u{i}" for i in range(8)])
        for (cond, ctrl), (states, bits) in table.trajectories.items():
            for i in range(states.shape[0]):
                for k in range(states.shape[1]):
                    w.writerow([cond, ctrl, i, k + 1] + [f"{v:.10g}" for v in states[i, k]]
                               + [int(x) for x in bits[i, k]])


def cmd_eval(cfg: SuiteConfig, out: Path) -> int:
    return _bench(cfg, out, [Condition("Eval", cfg.profile())], "eval")


def cmd_bench(cfg: SuiteConfig, out: Path) -> int:
    return _bench(cfg, out, parse_conditions(cfg["bench"]["conditions"]), "bench")


def cmd_track(cfg: SuiteConfig, out: Path) -> int:
    t = cfg["tracker"]
    path = PathSpec(t["shape"], t["size"], tuple(t["center"]), t["lookahead_r"], t["target_speed"], t["spacing"],
                    lemniscate=t["lemniscate"])
    driver = make_driver(t["controller"], cfg)
    run = run_tracking(driver, path, t["steps"] or None, cfg.profile(), cfg.platform_params(), cfg["seed"])
    run.write_csv(out / f"track_{t['shape']}.csv")
    report = velocity_report([run])
    text = format_velocity_report(report)
    (out / "velocity_report.txt").write_text(text)
    summary = {shape: {"mean": m, "std": s, "tracking_error": run.tracking_error} for shape, (m, s) in report.items()}
    with open(out / "velocity_report.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(text, end="")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "track": cmd_track}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg.dump(out / f"{args.command}_config.yaml")
        with threadpool_limits(cfg["threads"]):
            return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DareError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
