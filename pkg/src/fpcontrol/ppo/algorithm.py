"""Clipped-surrogate PPO for an 8-way Bernoulli thruster policy."""

from __future__ import annotations

import logging
from dataclasses import dataclass, asdict

import numpy as np

from ..env import OBS_DIM
from .network import MLP, sigmoid, softplus
from .normalization import RunningScalar

logger = logging.getLogger(__name__)

N_ACTIONS = 8
PROB_EPS = 1e-8


@dataclass(frozen=True)
class PpoConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.0
    critic_coef: float = 0.5
    grad_clip_norm: float = 1.0
    kl_threshold: float = 0.016
    lr_min: float = 1e-6
    lr_max: float = 1e-2
    mini_epochs: int = 8
    minibatch: int = 8192
    clip_eps: float = 0.2
    horizon: int = 16
    num_envs: int = 512
    epochs: int = 500
    hidden: tuple = (128, 128)
    normalize_value: bool = True
    init: str = "orthogonal"
    compute_dtype: str = "float32"
    # training-only spawn curriculum: disc radius ramps from spawn_start to the
    # configured reset radius over the first spawn_ramp fraction of epochs
    spawn_start: float | None = 0.5
    spawn_ramp: float = 0.5

    def __post_init__(self):
        if (self.num_envs * self.horizon) % self.minibatch:
            raise ValueError(
                f"num_envs*horizon ({self.num_envs * self.horizon}) must be divisible by minibatch ({self.minibatch})"
            )
        if self.compute_dtype not in ("float32", "float64"):
            raise ValueError("compute_dtype must be 'float32' or 'float64'")
        if self.init not in ("orthogonal", "zeros"):
            raise ValueError("init must be 'orthogonal' or 'zeros'")
        if self.spawn_start is not None and self.spawn_start <= 0:
            raise ValueError("spawn_start must be positive or None")
        if not 0.0 <= self.spawn_ramp <= 1.0:
            raise ValueError("spawn_ramp must be in [0, 1]")
        for name in ("lr", "gamma", "gae_lambda", "grad_clip_norm", "clip_eps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class ActorCritic:
    """Separate actor (logits) and critic (normalized value) networks."""

    def __init__(self, actor: MLP, critic: MLP, value_norm: RunningScalar | None = None):
        self.actor = actor
        self.critic = critic
        self.value_norm = value_norm or RunningScalar()

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        hidden=(128, 128),
        obs_dim: int = OBS_DIM,
        init: str = "orthogonal",
        dtype=np.float64,
    ):
        a_sizes = (obs_dim, *hidden, N_ACTIONS)
        c_sizes = (obs_dim, *hidden, 1)
        if init == "zeros":
            return cls(MLP(a_sizes, dtype=dtype), MLP(c_sizes, dtype=dtype))
        return cls(
            MLP.initialized(a_sizes, rng, out_gain=0.01, dtype=dtype),
            MLP.initialized(c_sizes, rng, out_gain=1.0, dtype=dtype),
        )

    def set_dtype(self, dtype):
        self.actor.dtype = self.critic.dtype = np.dtype(dtype)

    @property
    def params(self) -> list:
        return self.actor.params + self.critic.params

    def set_params(self, params):
        n = len(self.actor.params)
        self.actor.params = [np.array(p) for p in params[:n]]
        self.critic.params = [np.array(p) for p in params[n:]]

    def value(self, obs_n) -> np.ndarray:
        return self.value_norm.denormalize(self.critic.forward(obs_n)[:, 0])


def forward_actor(actor: MLP, obs_n):
    logits = actor.forward(np.atleast_2d(obs_n))
    return logits, sigmoid(logits)


def log_prob(probs, bits) -> np.ndarray:
    """Joint log-probability of independent Bernoulli bits (summed over the last axis)."""
    p = np.clip(np.asarray(probs, dtype=float), PROB_EPS, 1.0 - PROB_EPS)
    b = np.asarray(bits, dtype=float)
    return np.sum(b * np.log(p) + (1.0 - b) * np.log1p(-p), axis=-1)


def log_prob_logits(logits, bits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    return np.sum(np.asarray(bits, dtype=float) * z - softplus(z), axis=-1)


def bernoulli_entropy(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    return np.sum(softplus(z) - z * sigmoid(z), axis=-1)


def bernoulli_kl(p_old, p_new) -> np.ndarray:
    p = np.clip(p_old, PROB_EPS, 1 - PROB_EPS)
    q = np.clip(p_new, PROB_EPS, 1 - PROB_EPS)
    return np.sum(p * np.log(p / q) + (1 - p) * np.log((1 - p) / (1 - q)), axis=-1)


def gae(rewards, values, dones, last_value, gamma: float = 0.99, lam: float = 0.95):
    """Generalized advantage estimates over a ``(T, N)`` rollout.

    ``dones[t]`` marks that the episode ended after step ``t``; ``last_value``
    bootstraps the step after the horizon.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    notdone = 1.0 - np.asarray(dones, dtype=float)
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(last_value, dtype=float)
    running = np.zeros_like(next_value)
    for t in reversed(range(T)):
        delta = rewards[t] + gamma * next_value * notdone[t] - values[t]
        running = delta + gamma * lam * notdone[t] * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def _loss_terms(ac: ActorCritic, batch: dict, cfg: PpoConfig, cache: bool):
    obs, bits, adv = batch["obs"], batch["bits"].astype(float), batch["adv"]
    n = obs.shape[0]

    a_out = ac.actor.forward(obs, cache=cache)
    logits, a_acts = a_out if cache else (a_out, None)
    probs = sigmoid(logits)
    logp = log_prob_logits(logits, bits)
    ratio = np.exp(logp - batch["logp_old"])
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    policy_loss = -np.minimum(ratio * adv, clipped * adv).mean()
    entropy = bernoulli_entropy(logits).mean()

    c_out = ac.critic.forward(obs, cache=cache)
    v, c_acts = c_out if cache else (c_out, None)
    err = v[:, 0] - ac.value_norm.normalize(batch["returns"])
    value_loss = cfg.critic_coef * np.mean(err**2)
    stats = {
        "loss": policy_loss + value_loss - cfg.entropy_coef * entropy,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
        "approx_kl": float(np.mean(bernoulli_kl(batch["probs_old"], probs))),
    }
    return stats, (n, bits, adv, logits, probs, ratio, err, a_acts, c_acts)


def ppo_loss(ac: ActorCritic, batch: dict, cfg: PpoConfig) -> dict:
    """Loss statistics without the backward pass."""
    return _loss_terms(ac, batch, cfg, cache=False)[0]


def loss_and_grads(ac: ActorCritic, batch: dict, cfg: PpoConfig):
    """Total PPO loss and its gradient for every parameter array.

    ``batch`` holds ``obs`` (normalized), ``bits``, ``logp_old``, ``probs_old``,
    ``adv`` (already normalized) and ``returns`` (raw scale).
    """
    stats, (n, bits, adv, logits, probs, ratio, err, a_acts, c_acts) = _loss_terms(ac, batch, cfg, cache=True)
    # gradient flows only through the unclipped branch when it is the active one
    active = np.where(adv >= 0, ratio <= 1.0 + cfg.clip_eps, ratio >= 1.0 - cfg.clip_eps)
    d_logp = -(adv * ratio * active) / n
    d_logits = d_logp[:, None] * (bits - probs)
    if cfg.entropy_coef:
        d_logits += cfg.entropy_coef / n * logits * probs * (1.0 - probs)
    d_v = (2.0 * cfg.critic_coef / n) * err[:, None]
    grads = ac.actor.backward(a_acts, d_logits) + ac.critic.backward(c_acts, d_v)
    return stats, grads


def clip_global_norm(grads, max_norm: float):
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    def __init__(self, params, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads, lr: float):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adapt_lr(lr: float, kl: float, cfg: PpoConfig) -> float:
    if kl > 1.5 * cfg.kl_threshold:
        lr = lr / 2.0
    elif kl < cfg.kl_threshold / 1.5:
        lr = lr * 1.5
    return float(np.clip(lr, cfg.lr_min, cfg.lr_max))


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_update(ac: ActorCritic, opt: Adam, buffer: dict, cfg: PpoConfig, rng: np.random.Generator, lr: float):
    """Run ``mini_epochs`` passes of shuffled minibatch updates in place.

    Returns ``(lr, stats)``; a non-finite loss or gradient restores the
    parameters from before the call and sets ``stats["aborted"]``.
    """
    snapshot = [p.copy() for p in ac.params]
    n = buffer["obs"].shape[0]
    history = []
    for _ in range(cfg.mini_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            mb = {k: v[idx] for k, v in buffer.items()}
            stats, grads = loss_and_grads(ac, mb, cfg)
            if not (np.isfinite(stats["loss"]) and all(np.all(np.isfinite(g)) for g in grads)):
                logger.error("non-finite PPO loss; update aborted")
                ac.set_params(snapshot)
                return lr, {"aborted": True, "lr": lr}
            grads, stats["grad_norm"] = clip_global_norm(grads, cfg.grad_clip_norm)
            opt.step(ac.params, grads, lr)
            lr = adapt_lr(lr, stats["approx_kl"], cfg)
            history.append(stats)
    out = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    out["aborted"] = False
    out["lr"] = lr
    return lr, out
