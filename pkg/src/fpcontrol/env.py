"""Go-to-pose and track-velocity tasks on top of the platform model.

The scalar helpers (:func:`position_error`, :func:`reward`, :func:`observe`, ...)
mirror the batched arithmetic used inside :class:`PlatformEnv`, which steps
``n_envs`` independent episodes at once with one RNG stream per episode.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .disturbances import (
    DisturbanceProfile,
    EpisodeDisturbance,
    floor_angle,
    sample_episode,
    velocity_noise,
)

GO_TO_POSE = "go_to_pose"
TRACK_VELOCITY = "track_velocity"
TASK_KINDS = (GO_TO_POSE, TRACK_VELOCITY)
TASK_FLAG = {GO_TO_POSE: 1.0, TRACK_VELOCITY: 2.0}
OBS_DIM = 10


def check_task_kind(kind: str) -> str:
    kind = kind.replace("-", "_")
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task {kind!r}; expected one of {TASK_KINDS}")
    return kind


@dataclass(frozen=True)
class TaskSpec:
    kind: str = GO_TO_POSE
    target_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    target_velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    episode_len: int = 250

    def __post_init__(self):
        object.__setattr__(self, "kind", check_task_kind(self.kind))
        if self.episode_len <= 0:
            raise ValueError("episode_len must be positive")

    @property
    def flag(self) -> float:
        return TASK_FLAG[self.kind]


@dataclass(frozen=True)
class RewardConfig:
    s_p: float = 0.5
    s_theta: float = 0.5
    exp_scale: float = 0.25
    c_act: float = 0.3
    act_fraction: bool = True
    c_omega: float = 0.15
    omega_thresh: float = 1.0
    use_vel_penalty: bool = False
    c_vel: float = 0.1
    vel_thresh: float = 0.5

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, bool) and v < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.exp_scale == 0:
            raise ValueError("exp_scale must be positive")


@dataclass(frozen=True)
class ResetRanges:
    spawn_radius: float = 2.0
    target_speed: float = 0.2


def _require(spec: TaskSpec, kind: str):
    if spec.kind != kind:
        raise ValueError(f"operation requires a {kind} task, got {spec.kind}")


def position_error(state: dyn.PlatformState, spec: TaskSpec) -> float:
    _require(spec, GO_TO_POSE)
    return float(np.hypot(spec.target_pose[0] - state.x, spec.target_pose[1] - state.y))


def heading_error(state: dyn.PlatformState, spec: TaskSpec) -> float:
    _require(spec, GO_TO_POSE)
    d = spec.target_pose[2] - state.theta
    return float(np.arctan2(np.sin(d), np.cos(d)))


def velocity_errors(state: dyn.PlatformState, spec: TaskSpec):
    _require(spec, TRACK_VELOCITY)
    vt = spec.target_velocity
    return np.array([vt[0] - state.vx, vt[1] - state.vy]), float(vt[2] - state.omega)


def penalties(bits, omega, v_norm, cfg: RewardConfig):
    n_on = np.asarray(bits, dtype=float).sum(axis=-1)
    p_act = cfg.c_act * (n_on / dyn.N_THRUSTERS if cfg.act_fraction else n_on)
    p = p_act + cfg.c_omega * np.maximum(0.0, np.abs(omega) - cfg.omega_thresh)
    if cfg.use_vel_penalty:
        p = p + cfg.c_vel * np.maximum(0.0, v_norm - cfg.vel_thresh)
    return p


def shaped_reward(lin_err, ang_err, bits, omega, v_norm, cfg: RewardConfig):
    """Exponential shaping on the linear and angular error magnitudes, minus penalties."""
    r = np.exp(-np.abs(lin_err) / cfg.exp_scale) * cfg.s_p + np.exp(-np.abs(ang_err) / cfg.exp_scale) * cfg.s_theta
    return r - penalties(bits, omega, v_norm, cfg)


def reward(state: dyn.PlatformState, cmd_bits, spec: TaskSpec, cfg: RewardConfig | None = None) -> float:
    cfg = cfg or RewardConfig()
    if spec.kind == GO_TO_POSE:
        lin, ang = position_error(state, spec), heading_error(state, spec)
    else:
        ev, ang = velocity_errors(state, spec)
        lin = float(np.linalg.norm(ev))
    return float(shaped_reward(lin, ang, cmd_bits, state.omega, np.hypot(state.vx, state.vy), cfg))


def pack_observation(states, kind: str, target_pose, target_velocity) -> np.ndarray:
    """Build ``(n, 10)`` observations from ``(n, 6)`` (possibly noisy) states."""
    s = np.atleast_2d(np.asarray(states, dtype=float))
    obs = np.zeros((s.shape[0], OBS_DIM))
    obs[:, 0] = np.cos(s[:, dyn.THETA])
    obs[:, 1] = np.sin(s[:, dyn.THETA])
    obs[:, 2] = s[:, dyn.VX]
    obs[:, 3] = s[:, dyn.VY]
    obs[:, 4] = s[:, dyn.OMEGA]
    obs[:, 5] = TASK_FLAG[kind]
    if kind == GO_TO_POSE:
        tp = np.broadcast_to(np.asarray(target_pose, dtype=float), (s.shape[0], 3))
        dth = tp[:, 2] - s[:, dyn.THETA]
        obs[:, 6] = tp[:, 0] - s[:, dyn.X]
        obs[:, 7] = tp[:, 1] - s[:, dyn.Y]
        obs[:, 8] = np.cos(dth)
        obs[:, 9] = np.sin(dth)
    else:
        tv = np.broadcast_to(np.asarray(target_velocity, dtype=float), (s.shape[0], 3))
        obs[:, 6] = tv[:, 0] - s[:, dyn.VX]
        obs[:, 7] = tv[:, 1] - s[:, dyn.VY]
    return obs


def observe(state: dyn.PlatformState, spec: TaskSpec, ep: EpisodeDisturbance | None = None, rng=None) -> np.ndarray:
    arr = state.as_array()
    if ep is not None and ep.profile.vn > 0:
        noise = velocity_noise((), ep.profile, rng)
        arr[[dyn.VX, dyn.VY, dyn.OMEGA]] += noise
    return pack_observation(arr, spec.kind, spec.target_pose, spec.target_velocity)[0]


def _initial_conditions(kind: str, rng: np.random.Generator, ranges: ResetRanges):
    """Draw (state, target_pose, target_velocity); same draw count for both tasks."""
    radius = ranges.spawn_radius * np.sqrt(rng.random())
    ang = rng.uniform(-np.pi, np.pi)
    heading = dyn.wrap_angle(rng.uniform(-np.pi, np.pi))
    vel_dir = rng.uniform(-np.pi, np.pi)
    state = np.zeros(dyn.STATE_DIM)
    target_vel = np.zeros(3)
    state[dyn.THETA] = heading
    if kind == GO_TO_POSE:
        state[dyn.X] = radius * np.cos(ang)
        state[dyn.Y] = radius * np.sin(ang)
    else:
        target_vel[:2] = ranges.target_speed * np.array([np.cos(vel_dir), np.sin(vel_dir)])
    return state, np.zeros(3), target_vel


def reset(
    kind: str,
    rng: np.random.Generator,
    ranges: ResetRanges | None = None,
    profile: DisturbanceProfile | None = None,
    episode_len: int = 250,
):
    """Single-episode reset: ``(PlatformState, TaskSpec, EpisodeDisturbance)``."""
    kind = check_task_kind(kind)
    state, tp, tv = _initial_conditions(kind, rng, ranges or ResetRanges())
    ep = sample_episode(profile or DisturbanceProfile(), rng)
    spec = TaskSpec(kind, tuple(tp), tuple(tv), episode_len)
    return dyn.PlatformState.from_array(state), spec, ep


def episode_streams(seed: int, env_index: int, episode: int):
    """Independent (initial-condition, disturbance) generators for one episode."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(env_index), int(episode)))
    init, dist = ss.spawn(2)
    return np.random.default_rng(init), np.random.default_rng(dist)


class PlatformEnv:
    """Batch of independent platform episodes with a gym-like reset/step contract.

    Parameters
    ----------
    n_envs : int
        Number of parallel episodes.
    task : str
        ``"go_to_pose"`` or ``"track_velocity"``.
    profile : DisturbanceProfile
        Evaluation disturbances.  ``uf_range`` overrides ``profile.uf`` with a
        per-episode uniform draw (training-time domain randomization).
    auto_reset : bool
        Reset finished episodes inside :meth:`step` (training) instead of
        refusing to step them (evaluation).
    """

    def __init__(
        self,
        n_envs: int = 1,
        task: str = GO_TO_POSE,
        params: dyn.PlatformParams | None = None,
        profile: DisturbanceProfile | None = None,
        reward_cfg: RewardConfig | None = None,
        ranges: ResetRanges | None = None,
        episode_len: int = 250,
        seed: int = 0,
        uf_range: tuple[float, float] | None = None,
        auto_reset: bool = False,
    ):
        self.n_envs = int(n_envs)
        self.task = check_task_kind(task)
        self.params = params or dyn.PlatformParams()
        self.profile = profile or DisturbanceProfile()
        self.reward_cfg = reward_cfg or RewardConfig()
        self.ranges = ranges or ResetRanges()
        self.episode_len = int(episode_len)
        self.seed = int(seed)
        self.uf_range = uf_range
        self.auto_reset = auto_reset

        n = self.n_envs
        self.states = np.zeros((n, dyn.STATE_DIM))
        self.t = np.zeros(n, dtype=int)
        self.done = np.zeros(n, dtype=bool)
        self.failed = np.zeros((n, dyn.N_THRUSTERS), dtype=bool)
        self.uf_phi0 = np.zeros(n)
        self.uf_mag = np.zeros(n)
        self.td_sign = np.ones(n)
        self.target_pose = np.zeros((n, 3))
        self.target_velocity = np.zeros((n, 3))
        self.episode_count = np.zeros(n, dtype=int)
        self._dist_rngs: list[np.random.Generator] = [None] * n
        self.terminal_obs = None
        self.observed_states = self.states.copy()

    # -- episode management -------------------------------------------------
    def _reset_one(self, i: int):
        init_rng, dist_rng = episode_streams(self.seed, i, self.episode_count[i])
        self.episode_count[i] += 1
        state, tp, tv = _initial_conditions(self.task, init_rng, self.ranges)
        ep = sample_episode(self.profile, dist_rng)
        uf = self.profile.uf
        if self.uf_range is not None:
            uf = dist_rng.uniform(*self.uf_range)
        self.states[i] = state
        self.target_pose[i] = tp
        self.target_velocity[i] = tv
        self.failed[i] = ep.failed
        self.uf_phi0[i] = ep.uf_phi0
        self.td_sign[i] = ep.td_sign
        self.uf_mag[i] = uf
        self.t[i] = 0
        self.done[i] = False
        self._dist_rngs[i] = dist_rng

    def reset(self, stagger: bool = False) -> np.ndarray:
        """Start fresh episodes; ``stagger`` spreads their time indices over the horizon."""
        self.episode_count[:] = 0
        for i in range(self.n_envs):
            self._reset_one(i)
        if stagger:
            rng = np.random.default_rng(np.random.SeedSequence(entropy=self.seed, spawn_key=(2**31 - 1,)))
            self.t[:] = rng.integers(0, self.episode_len, size=self.n_envs)
        return self.observe()

    def episode_disturbance(self, i: int) -> EpisodeDisturbance:
        prof = dataclasses.replace(self.profile, uf=float(self.uf_mag[i]))
        return EpisodeDisturbance(prof, self.failed[i].copy(), float(self.uf_phi0[i]), float(self.td_sign[i]))

    def set_target_velocity(self, v):
        self.target_velocity[:] = np.broadcast_to(np.asarray(v, dtype=float), self.target_velocity.shape)

    def set_target_pose(self, pose):
        self.target_pose[:] = np.broadcast_to(np.asarray(pose, dtype=float), self.target_pose.shape)

    # -- dynamics pipeline --------------------------------------------------
    def _per_env_uniform(self, mag: float, k: int) -> np.ndarray:
        if mag <= 0:
            return np.zeros((self.n_envs, k))
        return np.stack([rng.uniform(-mag, mag, size=k) for rng in self._dist_rngs])

    def external_wrench(self) -> np.ndarray:
        phi = floor_angle(self.profile, self.uf_phi0, self.t)
        return np.stack(
            [self.uf_mag * np.cos(phi), self.uf_mag * np.sin(phi), self.td_sign * self.profile.td], axis=-1
        )

    def observe(self) -> np.ndarray:
        """Policy observations; the velocity-corrupted states are kept in ``observed_states``."""
        noisy = self.states.copy()
        if self.profile.vn > 0:
            noise = np.stack([velocity_noise((), self.profile, rng) for rng in self._dist_rngs])
            noisy[:, [dyn.VX, dyn.VY, dyn.OMEGA]] += noise
        self.observed_states = noisy
        return pack_observation(noisy, self.task, self.target_pose, self.target_velocity)

    def rewards(self, bits) -> np.ndarray:
        s = self.states
        if self.task == GO_TO_POSE:
            lin = np.hypot(self.target_pose[:, 0] - s[:, dyn.X], self.target_pose[:, 1] - s[:, dyn.Y])
            ang = dyn.wrap_angle(self.target_pose[:, 2] - s[:, dyn.THETA])
        else:
            lin = np.hypot(self.target_velocity[:, 0] - s[:, dyn.VX], self.target_velocity[:, 1] - s[:, dyn.VY])
            ang = self.target_velocity[:, 2] - s[:, dyn.OMEGA]
        v_norm = np.hypot(s[:, dyn.VX], s[:, dyn.VY])
        return shaped_reward(lin, ang, bits, s[:, dyn.OMEGA], v_norm, self.reward_cfg)

    def step(self, bits):
        """Advance every episode one control step.

        Returns ``(obs, reward, done)``; with ``auto_reset`` the observation of a
        finished episode is already that of its successor.
        """
        bits = np.asarray(bits, dtype=bool).reshape(self.n_envs, dyn.N_THRUSTERS)
        if np.any(self.done):
            raise RuntimeError("step() called on a finished episode; call reset()")
        firing = bits & ~self.failed
        forces = dyn.shared_forces(firing, self.params.max_total_thrust)
        if self.profile.an > 0:
            forces = forces + firing * self._per_env_uniform(self.profile.an, dyn.N_THRUSTERS)
        wrench = dyn.wrench_from_forces(forces, self.params)
        self.states = dyn.integrate(self.states, wrench, self.external_wrench(), self.params)
        self.t += 1
        rew = self.rewards(bits)
        done = self.t >= self.episode_len
        self.done = done.copy()
        self.terminal_obs = None
        if self.auto_reset and np.any(done):
            self.terminal_obs = pack_observation(
                self.states[done], self.task, self.target_pose[done], self.target_velocity[done]
            )
            for i in np.flatnonzero(done):
                self._reset_one(i)
        obs = self.observe()
        return obs, rew, done


def step_env(env: PlatformEnv, bits):
    """Single-step convenience wrapper for ``n_envs == 1`` environments."""
    obs, rew, done = env.step(np.asarray(bits).reshape(1, -1))
    return obs[0], float(rew[0]), bool(done[0])


TRAJECTORY_HEADER = ["env", "t", "x", "y", "theta", "vx", "vy", "omega"] + [f"u{i}" for i in range(8)] + ["reward"]


@dataclass
class TrajectoryLog:
    """Accumulates per-step rows for CSV export."""

    rows: list = field(default_factory=list)
    extra_header: list = field(default_factory=list)

    def record(self, t, states, bits, rewards, extra=None):
        for i, (s, b, r) in enumerate(zip(states, np.asarray(bits, dtype=int), rewards)):
            row = [i, int(t), *(float(v) for v in s), *(int(v) for v in b), float(r)]
            if extra is not None:
                row.extend(float(v) for v in extra[i])
            self.rows.append(row)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER + list(self.extra_header))
            for row in self.rows:
                w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
