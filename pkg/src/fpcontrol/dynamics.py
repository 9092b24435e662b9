"""Planar rigid-body model of an air-bearing platform driven by 8 on/off thrusters.

All thrusters share one pressure line: when ``n`` of them are open each one
emits ``max_total_thrust / n``.  States are stored as ``(..., 6)`` arrays with
columns ``x, y, theta, vx, vy, omega`` so that whole batches of environments
can be advanced with a single call; :class:`PlatformState` is the scalar view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_THRUSTERS = 8
STATE_DIM = 6
X, Y, THETA, VX, VY, OMEGA = range(STATE_DIM)


def wrap_angle(a):
    """Wrap angles to the half-open interval (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    r = a - 2.0 * np.pi * np.floor((a + np.pi) / (2.0 * np.pi))
    r = np.where(r <= -np.pi, r + 2.0 * np.pi, r)
    r = np.where(r > np.pi, r - 2.0 * np.pi, r)
    return r if r.ndim else float(r)


def default_thruster_table(lever: float = 0.3) -> np.ndarray:
    """Four nozzle pairs at 45/135/225/315 deg, firing tangentially both ways.

    Rows are ``(px, py, dx, dy)`` in the body frame.  Even rows spin the body
    counter-clockwise, odd rows clockwise.
    """
    rows = []
    for deg in (45.0, 135.0, 225.0, 315.0):
        a = np.deg2rad(deg)
        px, py = lever * np.cos(a), lever * np.sin(a)
        tx, ty = -np.sin(a), np.cos(a)
        rows.append((px, py, tx, ty))
        rows.append((px, py, -tx, -ty))
    return np.array(rows)


@dataclass(frozen=True)
class PlatformParams:
    mass: float = 5.32
    radius: float = 0.31
    inertia: float = 0.5 * 5.32 * 0.31**2
    max_total_thrust: float = 1.0
    thruster_table: np.ndarray = field(default_factory=default_thruster_table)
    control_dt: float = 0.2

    def __post_init__(self):
        table = np.array(self.thruster_table, dtype=float)
        if table.shape != (N_THRUSTERS, 4):
            raise ValueError(f"thruster_table must be {N_THRUSTERS}x4, got {table.shape}")
        norms = np.linalg.norm(table[:, 2:], axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError(f"thruster directions must be unit vectors, norms={norms}")
        for name in ("mass", "inertia", "control_dt", "max_total_thrust"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        table.setflags(write=False)
        object.__setattr__(self, "thruster_table", table)

    @property
    def positions(self) -> np.ndarray:
        return self.thruster_table[:, :2]

    @property
    def directions(self) -> np.ndarray:
        return self.thruster_table[:, 2:]

    @property
    def lever_arms(self) -> np.ndarray:
        """Torque produced by one newton on each thruster (z of pos x dir)."""
        p, d = self.positions, self.directions
        return p[:, 0] * d[:, 1] - p[:, 1] * d[:, 0]

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "radius": self.radius,
            "inertia": self.inertia,
            "max_total_thrust": self.max_total_thrust,
            "control_dt": self.control_dt,
            "thruster_table": self.thruster_table.tolist(),
        }


@dataclass(frozen=True)
class PlatformState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    t: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.vx, self.vy, self.omega])

    @classmethod
    def from_array(cls, arr, t: int = 0) -> "PlatformState":
        x, y, theta, vx, vy, omega = (float(v) for v in arr)
        return cls(x, y, theta, vx, vy, omega, int(t))


@dataclass(frozen=True)
class ThrusterCommand:
    active: np.ndarray
    realized_force_per_thruster: float

    @property
    def forces(self) -> np.ndarray:
        return self.active * self.realized_force_per_thruster


def shared_forces(bits, max_total_thrust: float = 1.0) -> np.ndarray:
    """Per-thruster force under the shared pressure rule, batched over rows."""
    bits = np.asarray(bits, dtype=bool)
    n = bits.sum(axis=-1, keepdims=True)
    per = np.where(n > 0, max_total_thrust / np.maximum(n, 1), 0.0)
    return bits * per


def resolve_thrust(cmd_bits, params: PlatformParams) -> ThrusterCommand:
    bits = np.asarray(cmd_bits, dtype=bool).reshape(N_THRUSTERS)
    n = int(bits.sum())
    per = params.max_total_thrust / n if n else 0.0
    return ThrusterCommand(active=bits.copy(), realized_force_per_thruster=per)


def wrench_from_forces(forces, params: PlatformParams) -> np.ndarray:
    """Body-frame ``(Fx, Fy, Tz)`` for per-thruster force magnitudes ``(..., 8)``."""
    forces = np.asarray(forces, dtype=float)
    fx = forces @ params.directions[:, 0]
    fy = forces @ params.directions[:, 1]
    tz = forces @ params.lever_arms
    return np.stack([fx, fy, tz], axis=-1)


def body_wrench(cmd: ThrusterCommand, params: PlatformParams) -> tuple[float, float, float]:
    fx, fy, tz = wrench_from_forces(cmd.forces, params)
    return float(fx), float(fy), float(tz)


def integrate(states, body_wrenches, external, params: PlatformParams) -> np.ndarray:
    """One semi-implicit Euler step for a batch of ``(..., 6)`` states.

    ``body_wrenches`` are body-frame ``(Fx, Fy, Tz)``; ``external`` is a
    world-frame ``(Fx, Fy, Tz)`` added after rotation.
    """
    s = np.asarray(states, dtype=float)
    w = np.asarray(body_wrenches, dtype=float)
    e = np.asarray(external, dtype=float)
    c, sn = np.cos(s[..., THETA]), np.sin(s[..., THETA])
    fx = c * w[..., 0] - sn * w[..., 1] + e[..., 0]
    fy = sn * w[..., 0] + c * w[..., 1] + e[..., 1]
    tz = w[..., 2] + e[..., 2]
    dt = params.control_dt

    out = np.empty(np.broadcast_shapes(s.shape, fx.shape + (STATE_DIM,)))
    out[..., VX] = s[..., VX] + fx / params.mass * dt
    out[..., VY] = s[..., VY] + fy / params.mass * dt
    out[..., OMEGA] = s[..., OMEGA] + tz / params.inertia * dt
    out[..., X] = s[..., X] + out[..., VX] * dt
    out[..., Y] = s[..., Y] + out[..., VY] * dt
    out[..., THETA] = wrap_angle(s[..., THETA] + out[..., OMEGA] * dt)
    return out


def step(
    state: PlatformState,
    cmd: ThrusterCommand,
    external=(0.0, 0.0, 0.0),
    params: PlatformParams | None = None,
) -> PlatformState:
    params = params or PlatformParams()
    arr = state.as_array()
    ext = np.asarray(external, dtype=float)
    if not (np.all(np.isfinite(arr)) and np.all(np.isfinite(ext))):
        raise ValueError("non-finite state or external wrench")
    if not np.all(np.isfinite(cmd.forces)):
        raise ValueError("non-finite thruster forces")
    nxt = integrate(arr, wrench_from_forces(cmd.forces, params), ext, params)
    return PlatformState.from_array(nxt, state.t + 1)
