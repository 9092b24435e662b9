"""Hierarchical run configuration with strict keys and dotted overrides."""

from __future__ import annotations

import copy
import dataclasses
import json
from pathlib import Path

import yaml

from .disturbances import DisturbanceProfile
from .dynamics import PlatformParams, default_thruster_table
from .env import ResetRanges, RewardConfig, TaskSpec, check_task_kind
from .lqr import LqrWeights
from .ppo.algorithm import PpoConfig


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def _fields(obj, skip=()) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        if f.init and f.name not in skip:
            v = getattr(obj, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def _defaults() -> dict:
    platform = _fields(PlatformParams(), skip=("thruster_table",))
    platform["lever"] = 0.3
    ppo = _fields(PpoConfig())
    ppo["train_uf_range"] = [0.0, 0.25]
    ppo["checkpoint_every"] = 0
    lqr = _fields(LqrWeights())
    lqr.update(relinearize_every=1, normalization="clamp", eps_x=1e-4, eps_u=1e-2, tol=1e-9, max_iter=100_000)
    return {
        "seed": 0,
        "out": "runs",
        "threads": 1,
        "platform": platform,
        "disturbance": _fields(DisturbanceProfile(), skip=("seed",)),
        "task": {"kind": "go_to_pose", "episode_len": 250, **_fields(ResetRanges())},
        "reward": _fields(RewardConfig()),
        "ppo": ppo,
        "lqr": lqr,
        "tracker": {
            "shape": "circle",
            "size": 1.0,
            "center": [0.0, 0.0],
            "lookahead_r": 0.25,
            "target_speed": 0.2,
            "spacing": 0.01,
            "lemniscate": "gerono",
            "steps": 0,
            "controller": "lqr",
        },
        "bench": {
            "controller": "lqr",
            "conditions": "table2",
            "n_traj": 256,
            "length": 250,
            "aas_mode": "fraction",
            "dump_trajectories": False,
        },
    }


DEFAULTS = _defaults()


def _coerce(path: str, value, default):
    """Check ``value`` against the type of its default."""
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return [_coerce(f"{path}[{i}]", v, default[0] if default else None) for i, v in enumerate(value)]
    return value


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    for key, value in update.items():
        path = f"{prefix}{key}"
        if key not in base:
            valid = ", ".join(sorted(base))
            raise ConfigError(f"unknown key {path!r}; valid keys here: {valid}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected a mapping")
            _merge(base[key], value, path + ".")
        else:
            base[key] = _coerce(path, value, DEFAULTS_FLAT.get(path, base[key]))
    return base


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, f"{prefix}{k}."))
        else:
            out[f"{prefix}{k}"] = v
    return out


DEFAULTS_FLAT = _flatten(DEFAULTS)


def parse_override(text: str) -> dict:
    """``"ppo.epochs=10"`` -> ``{"ppo": {"epochs": 10}}`` (value parsed as YAML)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else ""
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
    node: dict = {}
    cur = node
    parts = key.strip().split(".")
    for p in parts[:-1]:
        cur = cur.setdefault(p, {})
    cur[parts[-1]] = value
    return node


class SuiteConfig:
    """Full run configuration; every key has a default and unknown keys are rejected."""

    def __init__(self, data: dict | None = None):
        self.data = _merge(copy.deepcopy(DEFAULTS), data or {})
        self.validate()

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        path = Path(path)
        text = path.read_text()
        try:
            data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls(data or {})

    def with_overrides(self, overrides) -> "SuiteConfig":
        data = copy.deepcopy(self.data)
        for item in overrides:
            _merge(data, parse_override(item) if isinstance(item, str) else item)
        return SuiteConfig(data)

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def dump(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.data, fh, sort_keys=True)

    def validate(self):
        # building every object surfaces range errors with their section name
        for name in ("platform_params", "profile", "reward_cfg", "ranges", "ppo_config", "lqr_weights"):
            getattr(self, name)()
        check = self.data
        try:
            check_task_kind(check["task"]["kind"])
        except ValueError as exc:
            raise ConfigError(f"task.kind: {exc}") from exc
        if check["threads"] < 1:
            raise ConfigError("threads: must be >= 1")
        if check["bench"]["n_traj"] < 1 or check["bench"]["length"] < 1:
            raise ConfigError("bench.n_traj and bench.length must be >= 1")
        lo, hi = check["ppo"]["train_uf_range"]
        if not 0 <= lo <= hi:
            raise ConfigError("ppo.train_uf_range: need 0 <= low <= high")

    def _build(self, section: str, fn):
        try:
            return fn(self.data[section])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}: {exc}") from exc

    def platform_params(self) -> PlatformParams:
        def make(d):
            d = dict(d)
            lever = d.pop("lever")
            return PlatformParams(thruster_table=default_thruster_table(lever), **d)

        return self._build("platform", make)

    def profile(self) -> DisturbanceProfile:
        return self._build("disturbance", lambda d: DisturbanceProfile(seed=self.data["seed"], **d))

    def reward_cfg(self) -> RewardConfig:
        return self._build("reward", lambda d: RewardConfig(**d))

    def ranges(self) -> ResetRanges:
        return self._build("task", lambda d: ResetRanges(d["spawn_radius"], d["target_speed"]))

    def task_spec(self) -> TaskSpec:
        return TaskSpec(check_task_kind(self.data["task"]["kind"]), episode_len=self.data["task"]["episode_len"])

    def ppo_config(self) -> PpoConfig:
        def make(d):
            d = {k: v for k, v in d.items() if k not in ("train_uf_range", "checkpoint_every")}
            d["hidden"] = tuple(d["hidden"])
            return PpoConfig(**d)

        return self._build("ppo", make)

    def lqr_weights(self) -> LqrWeights:
        return self._build(
            "lqr", lambda d: LqrWeights(tuple(d["q"]), tuple(d["r"]), tuple(d["w"]), tuple(d["q_order"]))
        )

    def lqr_kwargs(self) -> dict:
        d = self.data["lqr"]
        return {k: d[k] for k in ("relinearize_every", "normalization", "eps_x", "eps_u", "tol", "max_iter")}
