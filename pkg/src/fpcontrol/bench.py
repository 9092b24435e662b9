"""Seeded evaluation batches, metric tables and velocity-error summaries."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .disturbances import DisturbanceProfile
from .env import GO_TO_POSE, TRACK_VELOCITY, PlatformEnv
from .lqr import LQRController
from .tracker import PathSpec, PurePursuitTracker, lap_steps

logger = logging.getLogger(__name__)

POS_THRESH_CM = (5, 2, 1)
HEAD_THRESH_DEG = (5, 2, 1)
RATIO_METRICS = ("PT5", "PT2", "PT1", "OT5", "OT2", "OT1")
METRICS = RATIO_METRICS + ("ALV", "AAV", "AAS")
BUCKETS = ("0-20", "20-40", "40-60", "60-80", "80-100")
COLUMNS = ("condition", "controller", "VN", "UF", "TD", "RTF") + METRICS


@dataclass
class EvalRecord:
    """Per-trajectory accumulators; every field holds one entry per trajectory."""

    pos_under: np.ndarray  # (n, 3) steps with e_p under 5, 2, 1 cm
    head_under: np.ndarray  # (n, 3) steps with |e_theta| under 5, 2, 1 deg
    sum_speed: np.ndarray
    sum_omega: np.ndarray
    activations: np.ndarray
    steps: np.ndarray

    @classmethod
    def from_trajectories(cls, states, bits, target_pose=(0.0, 0.0, 0.0)) -> "EvalRecord":
        """Accumulate from ``states (n, T, 6)`` and ``bits (n, T, 8)``.

        ``states[:, k]`` is the state after the ``k``-th command.  Thresholds are
        strict inequalities.
        """
        s = np.asarray(states, dtype=float)
        if s.ndim == 2:
            s = s[None]
        if s.shape[0] == 0 or s.shape[1] == 0:
            raise ValueError("empty trajectory batch")
        b = np.asarray(bits, dtype=float).reshape(s.shape[0], s.shape[1], dyn.N_THRUSTERS)
        tp = np.broadcast_to(np.asarray(target_pose, dtype=float), (s.shape[0], 3))[:, None, :]
        e_p = np.hypot(tp[..., 0] - s[..., dyn.X], tp[..., 1] - s[..., dyn.Y])
        e_th = np.degrees(np.abs(dyn.wrap_angle(tp[..., 2] - s[..., dyn.THETA])))
        return cls(
            pos_under=np.stack([(e_p < c / 100.0).sum(axis=1) for c in POS_THRESH_CM], axis=1),
            head_under=np.stack([(e_th < d).sum(axis=1) for d in HEAD_THRESH_DEG], axis=1),
            sum_speed=np.hypot(s[..., dyn.VX], s[..., dyn.VY]).sum(axis=1),
            sum_omega=np.abs(s[..., dyn.OMEGA]).sum(axis=1),
            activations=b.sum(axis=(1, 2)),
            steps=np.full(s.shape[0], s.shape[1]),
        )

    @classmethod
    def concat(cls, records) -> "EvalRecord":
        return cls(*(np.concatenate([getattr(r, f) for r in records]) for f in cls.__dataclass_fields__))

    def __len__(self):
        return len(self.steps)

    def row(self, aas_mode: str = "fraction") -> dict:
        if len(self) == 0:
            raise ValueError("empty trajectory batch")
        n = self.steps.astype(float)
        out = {}
        for j, c in enumerate(POS_THRESH_CM):
            out[f"PT{c}"] = float(np.mean(self.pos_under[:, j] / n) * 100.0)
        for j, d in enumerate(HEAD_THRESH_DEG):
            out[f"OT{d}"] = float(np.mean(self.head_under[:, j] / n) * 100.0)
        out["ALV"] = float(np.mean(self.sum_speed / n))
        out["AAV"] = float(np.mean(self.sum_omega / n))
        per_step = self.activations / n
        out["AAS"] = float(np.mean(per_step / dyn.N_THRUSTERS if aas_mode == "fraction" else per_step))
        return out


def compile_metrics(states, bits, target_pose=(0.0, 0.0, 0.0), aas_mode: str = "fraction") -> dict:
    """PT/OT percentages plus ALV, AAV and AAS for a batch of GoToPose trajectories."""
    return EvalRecord.from_trajectories(states, bits, target_pose).row(aas_mode)


def degradation_bucket(value: float, ideal: float) -> str:
    """Relative drop against the ideal value, bucketed in 20% bands (right-inclusive)."""
    if not (np.isfinite(ideal) and ideal > 0 and np.isfinite(value)):
        return "n/a"
    drop = max(0.0, 1.0 - value / ideal)
    k = int(np.ceil(round(drop * 5.0, 12))) - 1
    return BUCKETS[min(max(k, 0), len(BUCKETS) - 1)]


# -- controllers ------------------------------------------------------------


class LQRDriver:
    """Feeds the (possibly noisy) observed state to an LQR controller."""

    label = "LQR"

    def __init__(self, controller: LQRController | None = None):
        self.controller = controller or LQRController()
        if not hasattr(self.controller, "K_"):
            self.controller.fit()

    def reset(self, n_envs: int):
        self.controller.reset(n_envs)
        self.controller.n_solver_failures_ = 0

    @property
    def failures(self) -> int:
        return int(self.controller.n_solver_failures_)

    def act(self, env: PlatformEnv, obs) -> np.ndarray:
        if env.task == GO_TO_POSE:
            return self.controller.predict(env.observed_states, env.target_pose)
        # velocity regulation: pose error zeroed by aiming at the current pose
        goal = env.observed_states[:, [dyn.X, dyn.Y, dyn.THETA]]
        return self.controller.predict(env.observed_states, goal, env.target_velocity)


class PolicyDriver:
    """Deterministic (p >= 0.5) evaluation of a trained policy."""

    label = "RL"
    failures = 0

    def __init__(self, policy):
        self.policy = policy

    def reset(self, n_envs: int):
        pass

    def act(self, env: PlatformEnv, obs) -> np.ndarray:
        return self.policy.act(obs, deterministic=True)


class PerfectFollower:
    """Kinematic oracle: the platform velocity becomes the command instantly."""

    label = "perfect"
    failures = 0
    kinematic = True

    def reset(self, n_envs: int):
        pass


# -- benchmark --------------------------------------------------------------


@dataclass(frozen=True)
class Condition:
    label: str
    profile: DisturbanceProfile


def standard_conditions() -> list[Condition]:
    return [
        Condition("Ideal", DisturbanceProfile()),
        Condition("VN 0.02", DisturbanceProfile(vn=0.02)),
        Condition("VN 0.04", DisturbanceProfile(vn=0.04)),
        Condition("TD 0.05", DisturbanceProfile(td=0.05)),
        Condition("UF 0.20", DisturbanceProfile(uf=0.20)),
        Condition("UF 0.40", DisturbanceProfile(uf=0.40)),
        Condition("UF 0.20 + TD 0.05", DisturbanceProfile(uf=0.20, td=0.05)),
        Condition("RTF 1", DisturbanceProfile(rtf_count=1)),
        Condition("RTF 2", DisturbanceProfile(rtf_count=2)),
    ]


def run_episodes(driver, profile: DisturbanceProfile, n_traj: int = 256, length: int = 250, seed: int = 0,
                 params: dyn.PlatformParams | None = None):
    """Roll out trajectories ``0..n_traj-1``; returns ``(states, bits)`` with shapes ``(n, T, 6)``, ``(n, T, 8)``.

    Trajectory ``i`` draws its start and disturbances from stream ``i`` of
    ``seed``, so every condition and controller sees the same initial poses.
    """
    env = PlatformEnv(n_traj, GO_TO_POSE, params, profile, episode_len=length, seed=seed)
    obs = env.reset()
    driver.reset(n_traj)
    states = np.empty((n_traj, length, dyn.STATE_DIM))
    bits = np.empty((n_traj, length, dyn.N_THRUSTERS), dtype=bool)
    for k in range(length):
        b = driver.act(env, obs)
        obs, _, _ = env.step(b)
        states[:, k] = env.states
        bits[:, k] = b
    return states, bits


@dataclass
class BenchmarkTable:
    rows: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)

    def add_buckets(self):
        ideal = {r["controller"]: r for r in self.rows if r["condition"] == "Ideal"}
        for r in self.rows:
            ref = ideal.get(r["controller"])
            for m in RATIO_METRICS:
                r[f"{m}_bucket"] = degradation_bucket(r[m], ref[m]) if ref else "n/a"

    def columns(self) -> list:
        return list(COLUMNS) + [f"{m}_bucket" for m in RATIO_METRICS] + ["solver_failures"]

    def write_csv(self, path):
        cols = self.columns()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([f"{r[c]:.10g}" if isinstance(r[c], float) else r[c] for c in cols])

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.rows, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_text(self) -> str:
        head = ["condition", "ctrl"] + list(METRICS)
        lines = []
        for r in self.rows:
            cells = [r["condition"], r["controller"]]
            for m in METRICS:
                cell = f"{r[m]:.2f}" if m in ("ALV", "AAV", "AAS") else f"{r[m]:.1f}"
                if m in RATIO_METRICS:
                    cell += f" [{r[m + '_bucket']}]"
                cells.append(cell)
            if r["solver_failures"]:
                cells[1] += "*"
            lines.append(cells)
        widths = [max(len(str(c)) for c in col) for col in zip(head, *lines)]
        fmt = lambda cells: "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
        out = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(c) for c in lines]
        if any(r["solver_failures"] for r in self.rows):
            out.append("* rows with LQR solver failures (those steps ran with thrusters off)")
        return "\n".join(out) + "\n"


def run_benchmark(drivers, conditions=None, n_traj: int = 256, length: int = 250, seed: int = 0,
                  params: dyn.PlatformParams | None = None, keep_trajectories: bool = False) -> BenchmarkTable:
    """Evaluate each driver (``{label: driver}``) under each condition."""
    conditions = standard_conditions() if conditions is None else list(conditions)
    table = BenchmarkTable()
    for cond in conditions:
        for label, driver in drivers.items():
            states, bits = run_episodes(driver, cond.profile, n_traj, length, seed, params)
            p = cond.profile
            row = {"condition": cond.label, "controller": label, "VN": p.vn, "UF": p.uf, "TD": p.td,
                   "RTF": p.rtf_count, **compile_metrics(states, bits), "solver_failures": driver.failures}
            table.rows.append(row)
            logger.info("%s / %s: PT5 %.1f", cond.label, label, row["PT5"])
            if keep_trajectories:
                table.trajectories[(cond.label, label)] = (states, bits)
    table.add_buckets()
    return table


# -- velocity tracking ------------------------------------------------------


@dataclass
class TrackingRun:
    shape: str
    positions: np.ndarray  # (T, 2) after each step
    commands: np.ndarray  # (T, 2) commanded velocity
    velocities: np.ndarray  # (T, 2) realized velocity after each step
    bits: np.ndarray  # (T, 8)
    path: PathSpec

    @property
    def velocity_errors(self) -> np.ndarray:
        return np.linalg.norm(self.commands - self.velocities, axis=1)

    @property
    def tracking_error(self) -> float:
        """Mean distance from the platform to the nearest path point."""
        return float(self.path.distance_to_path(self.positions).mean())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "y", "vx", "vy", "vx_cmd", "vy_cmd"] + [f"u{i}" for i in range(8)])
            for k in range(len(self.positions)):
                vals = [*self.positions[k], *self.velocities[k], *self.commands[k]]
                w.writerow([k + 1] + [f"{v:.10g}" for v in vals] + [int(b) for b in self.bits[k]])


def run_tracking(driver, path: PathSpec, steps: int | None = None, profile: DisturbanceProfile | None = None,
                 params: dyn.PlatformParams | None = None, seed: int = 0) -> TrackingRun:
    """Follow ``path`` from rest at its first waypoint with heading 0.

    ``steps`` defaults to one lap at the target speed.
    """
    params = params or dyn.PlatformParams()
    steps = steps or lap_steps(path, params.control_dt)
    env = PlatformEnv(1, TRACK_VELOCITY, params, profile, episode_len=steps, seed=seed)
    env.reset()
    env.states[0] = 0.0
    env.states[0, [dyn.X, dyn.Y]] = path.waypoints[0]
    tracker = PurePursuitTracker(path)
    driver.reset(1)
    kinematic = getattr(driver, "kinematic", False)
    pos, cmd, vel = np.empty((steps, 2)), np.empty((steps, 2)), np.empty((steps, 2))
    bits = np.zeros((steps, dyn.N_THRUSTERS), dtype=bool)
    for k in range(steps):
        v = tracker.command(env.states[0, [dyn.X, dyn.Y]])
        env.set_target_velocity((v[0], v[1], 0.0))
        obs = env.observe()
        if kinematic:
            env.states[0, [dyn.VX, dyn.VY]] = v
            env.states[0, [dyn.X, dyn.Y]] += v * params.control_dt
            env.t += 1
        else:
            bits[k] = driver.act(env, obs)[0]
            env.step(bits[k][None])
        pos[k] = env.states[0, [dyn.X, dyn.Y]]
        vel[k] = env.states[0, [dyn.VX, dyn.VY]]
        cmd[k] = v
    return TrackingRun(path.kind, pos, cmd, vel, bits, path)


def velocity_report(runs) -> dict:
    """Per-shape ``(mean, std)`` of the velocity-error norm over all steps of its runs."""
    by_shape: dict = {}
    for run in runs:
        by_shape.setdefault(run.shape, []).append(run.velocity_errors)
    return {shape: (float(np.mean(np.concatenate(e))), float(np.std(np.concatenate(e))))
            for shape, e in by_shape.items()}


def format_velocity_report(report: dict) -> str:
    return "\n".join(f"{shape}: {m:.2f} ± {s:.2f}" for shape, (m, s) in report.items()) + "\n"
