"""Rollout collection, the training loop, checkpoints and the estimator wrapper."""

from __future__ import annotations

import csv
import json
import logging
import struct
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..disturbances import DisturbanceProfile
from ..dynamics import PlatformParams
from ..env import GO_TO_POSE, OBS_DIM, PlatformEnv, RewardConfig, ResetRanges, check_task_kind
from .algorithm import (
    Adam,
    ActorCritic,
    N_ACTIONS,
    PpoConfig,
    forward_actor,
    gae,
    log_prob,
    normalize_advantages,
    ppo_update,
)
from .network import MLP
from .normalization import RunningObsNormalizer, RunningScalar

logger = logging.getLogger(__name__)

MAGIC = b"FPCTRLPO"
FORMAT_VERSION = 1
LOG_FIELDS = [
    "epoch", "steps", "mean_return", "mean_reward", "loss", "policy_loss", "value_loss",
    "entropy", "approx_kl", "lr", "clip_fraction",
]


class TrainingError(RuntimeError):
    pass


class Policy:
    """Actor-critic plus the observation statistics it was trained with."""

    def __init__(self, ac: ActorCritic, obs_norm: RunningObsNormalizer, task: str = GO_TO_POSE, meta: dict | None = None):
        self.ac = ac
        self.obs_norm = obs_norm
        self.task = task
        self.meta = dict(meta or {})

    def probs(self, obs) -> np.ndarray:
        return forward_actor(self.ac.actor, self.obs_norm.transform(np.atleast_2d(obs)))[1]

    def act(self, obs, deterministic: bool = True, rng: np.random.Generator | None = None) -> np.ndarray:
        p = self.probs(obs)
        if deterministic:
            return p >= 0.5
        return rng.random(p.shape) < p

    # -- checkpoint format -----------------------------------------------------
    def save(self, path):
        """Write the little-endian binary checkpoint described in the README."""
        meta = json.dumps({"task": self.task, **self.meta}, sort_keys=True).encode()
        nets = (self.ac.actor, self.ac.critic)
        parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
        for net in nets:
            parts.append(struct.pack("<I", len(net.sizes)))
            parts.append(struct.pack(f"<{len(net.sizes)}I", *net.sizes))
        d = self.obs_norm.n_features_in_
        parts.append(struct.pack("<I", d))
        parts.append(np.asarray(self.obs_norm.mean_, dtype="<f8").tobytes())
        parts.append(np.asarray(self.obs_norm.var_, dtype="<f8").tobytes())
        vn = self.ac.value_norm
        parts.append(np.array([self.obs_norm.count_, vn.mean, vn.var, vn.count], dtype="<f8").tobytes())
        parts.append(struct.pack("<I", len(meta)))
        parts.append(meta)
        for net in nets:
            for p in net.params:
                parts.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path) -> "Policy":
        buf = Path(path).read_bytes()
        if buf[:8] != MAGIC:
            raise ValueError(f"{path}: not a policy checkpoint")
        off = 8
        (version,) = struct.unpack_from("<I", buf, off)
        off += 4
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        sizes = []
        for _ in range(2):
            (k,) = struct.unpack_from("<I", buf, off)
            off += 4
            sizes.append(struct.unpack_from(f"<{k}I", buf, off))
            off += 4 * k
        (d,) = struct.unpack_from("<I", buf, off)
        off += 4

        def floats(count):
            nonlocal off
            arr = np.frombuffer(buf, dtype="<f8", count=count, offset=off).astype(float)
            off += 8 * count
            return arr

        mean, var = floats(d), floats(d)
        obs_count, v_mean, v_var, v_count = floats(4)
        (mlen,) = struct.unpack_from("<I", buf, off)
        off += 4
        meta = json.loads(buf[off : off + mlen].decode())
        off += mlen
        nets = []
        for sz in sizes:
            params = []
            for n_in, n_out in zip(sz[:-1], sz[1:]):
                params.append(floats(n_in * n_out).reshape(n_in, n_out))
                params.append(floats(n_out))
            nets.append(MLP(sz, params))
        if off != len(buf):
            raise ValueError(f"{path}: {len(buf) - off} trailing bytes")
        norm = RunningObsNormalizer(frozen=True)
        norm.mean_, norm.var_, norm.count_, norm.n_features_in_ = mean, var, obs_count, d
        vn = RunningScalar()
        vn.mean, vn.var, vn.count = v_mean, v_var, v_count
        task = meta.pop("task", GO_TO_POSE)
        return cls(ActorCritic(nets[0], nets[1], vn), norm, task, meta)


def collect_rollout(env: PlatformEnv, policy: Policy, obs, cfg: PpoConfig, rng: np.random.Generator, returns_acc, finished):
    """Gather ``horizon`` steps from every env; returns the flat buffer and next obs."""
    T, N = cfg.horizon, env.n_envs
    buf = {
        "obs": np.zeros((T, N, OBS_DIM)),
        "bits": np.zeros((T, N, N_ACTIONS), dtype=bool),
        "logp_old": np.zeros((T, N)),
        "probs_old": np.zeros((T, N, N_ACTIONS)),
    }
    values = np.zeros((T, N))
    rewards = np.zeros((T, N))
    dones = np.zeros((T, N))
    ac = policy.ac
    raw_sum = 0.0
    for t in range(T):
        policy.obs_norm.partial_fit(obs)
        obs_n = policy.obs_norm.transform(obs)
        _, probs = forward_actor(ac.actor, obs_n)
        bits = rng.random(probs.shape) < probs
        buf["obs"][t] = obs_n
        buf["bits"][t] = bits
        buf["probs_old"][t] = probs
        buf["logp_old"][t] = log_prob(probs, bits)
        values[t] = ac.value(obs_n)
        obs, rew, done = env.step(bits)
        if not np.all(np.isfinite(obs)) or not np.all(np.isfinite(rew)):
            bad = np.flatnonzero(~np.all(np.isfinite(obs), axis=1) | ~np.isfinite(rew))
            raise TrainingError(f"non-finite rollout in envs {bad[:10].tolist()} at step {t}")
        returns_acc += rew
        rewards[t] = rew
        raw_sum += float(rew.sum())
        if np.any(done):
            # every episode end is a time limit: bootstrap from the final state
            final_v = ac.value(policy.obs_norm.transform(env.terminal_obs))
            rewards[t, done] += cfg.gamma * final_v
            finished.extend(returns_acc[done].tolist())
            returns_acc[done] = 0.0
        dones[t] = done
    last_v = ac.value(policy.obs_norm.transform(obs))
    adv, ret = gae(rewards, values, dones, last_v, cfg.gamma, cfg.gae_lambda)
    flat = {k: v.reshape(T * N, *v.shape[2:]) for k, v in buf.items()}
    flat["adv"] = adv.reshape(-1)
    flat["returns"] = ret.reshape(-1)
    return flat, obs, raw_sum / (T * N)


def spawn_radius(cfg: PpoConfig, full: float, epoch: int) -> float:
    """Training spawn-disc radius at ``epoch`` under the curriculum in ``cfg``."""
    if cfg.spawn_start is None or cfg.spawn_start >= full:
        return full
    ramp_epochs = cfg.spawn_ramp * cfg.epochs
    frac = 1.0 if ramp_epochs <= 0 else min(1.0, epoch / ramp_epochs)
    return cfg.spawn_start + (full - cfg.spawn_start) * frac


def train(
    task: str = GO_TO_POSE,
    cfg: PpoConfig | None = None,
    profile: DisturbanceProfile | None = None,
    seed: int = 0,
    params: PlatformParams | None = None,
    reward_cfg: RewardConfig | None = None,
    ranges: ResetRanges | None = None,
    episode_len: int = 250,
    uf_range: tuple[float, float] | None = (0.0, 0.25),
    log_path=None,
    checkpoint_path=None,
    checkpoint_every: int = 0,
    callback=None,
):
    """Train a policy; returns ``(Policy, log_rows)``.

    Only the floor force is randomized during training (``uf_range`` N per
    episode, direction frozen per episode).  Every random draw derives from
    ``seed``: environments, action sampling and minibatch shuffles.
    """
    cfg = cfg or PpoConfig()
    task = check_task_kind(task)
    ss = np.random.SeedSequence(int(seed))
    # env streams use two-element spawn keys, these children use one
    init_seq, sample_seq, shuffle_seq = ss.spawn(3)
    env = PlatformEnv(
        cfg.num_envs, task, params, profile, reward_cfg, ranges, episode_len,
        seed=int(seed), uf_range=uf_range, auto_reset=True,
    )
    ac = ActorCritic.create(np.random.default_rng(init_seq), cfg.hidden, init=cfg.init, dtype=cfg.compute_dtype)
    if not cfg.normalize_value:
        ac.value_norm = _IdentityScalar()
    policy = Policy(ac, RunningObsNormalizer(), task, {"seed": int(seed), "episode_len": episode_len})
    sample_rng = np.random.default_rng(sample_seq)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    opt = Adam(ac.params)
    lr = cfg.lr

    full_ranges = env.ranges
    env.ranges = replace(full_ranges, spawn_radius=spawn_radius(cfg, full_ranges.spawn_radius, 0))
    obs = env.reset(stagger=True)
    returns_acc = np.zeros(cfg.num_envs)
    rows = []
    log_fh = writer = None
    if log_path is not None:
        log_fh = open(log_path, "w", newline="")
        writer = csv.DictWriter(log_fh, LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
    try:
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            env.ranges = replace(full_ranges, spawn_radius=spawn_radius(cfg, full_ranges.spawn_radius, epoch))
            finished: list[float] = []
            buf, obs, mean_reward = collect_rollout(env, policy, obs, cfg, sample_rng, returns_acc, finished)
            ac.value_norm.update(buf["returns"])
            buf["adv"] = normalize_advantages(buf["adv"])
            lr, stats = ppo_update(ac, opt, buf, cfg, shuffle_rng, lr)
            if stats["aborted"]:
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            row = {
                "epoch": epoch,
                "steps": cfg.num_envs * cfg.horizon,
                "mean_return": float(np.mean(finished)) if finished else float("nan"),
                "mean_reward": mean_reward,
                **{k: stats[k] for k in ("loss", "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction")},
                "lr": lr,
                "seconds": time.perf_counter() - t0,
            }
            rows.append(row)
            if writer is not None:
                writer.writerow({k: (f"{row[k]:.10g}" if isinstance(row[k], float) else row[k]) for k in LOG_FIELDS})
                log_fh.flush()
            if callback is not None:
                callback(row)
            if checkpoint_path and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                policy.save(checkpoint_path)
    finally:
        if log_fh is not None:
            log_fh.close()
    policy.obs_norm.frozen = True
    ac.set_dtype(np.float64)
    if checkpoint_path:
        policy.save(checkpoint_path)
    return policy, rows


class _IdentityScalar(RunningScalar):
    def update(self, x):
        pass


class PPOAgent(BaseEstimator):
    """Estimator facade: ``fit`` trains, ``predict`` returns deterministic thruster bits."""

    def __init__(
        self,
        task: str = GO_TO_POSE,
        config: PpoConfig | None = None,
        profile: DisturbanceProfile | None = None,
        seed: int = 0,
        uf_range: tuple = (0.0, 0.25),
        episode_len: int = 250,
    ):
        self.task = task
        self.config = config
        self.profile = profile
        self.seed = seed
        self.uf_range = uf_range
        self.episode_len = episode_len

    def fit(self, X=None, y=None, log_path=None, checkpoint_path=None):
        self.policy_, self.history_ = train(
            self.task, self.config, self.profile, self.seed,
            episode_len=self.episode_len, uf_range=self.uf_range,
            log_path=log_path, checkpoint_path=checkpoint_path,
        )
        self.n_features_in_ = OBS_DIM
        return self

    @classmethod
    def from_checkpoint(cls, path) -> "PPOAgent":
        policy = Policy.load(path)
        agent = cls(task=policy.task, seed=int(policy.meta.get("seed", 0)))
        agent.policy_, agent.history_, agent.n_features_in_ = policy, [], OBS_DIM
        return agent

    def predict_proba(self, X):
        check_is_fitted(self, "policy_")
        X = check_array(X)
        return self.policy_.probs(X)

    def predict(self, X):
        return self.predict_proba(X) >= 0.5
