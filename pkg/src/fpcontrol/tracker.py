"""Look-ahead path tracker producing constant-speed velocity targets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import TRACK_VELOCITY, TaskSpec

SHAPES = ("circle", "square", "infinite", "polyline")


def resample(points, spacing: float, closed: bool) -> np.ndarray:
    """Re-space a polyline uniformly by arc length with gaps no larger than ``spacing``."""
    pts = np.asarray(points, dtype=float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(int(np.ceil(total / spacing)), 1)
    if closed:
        u = np.arange(n) * (total / n)
    else:
        u = np.linspace(0.0, total, n + 1)
    return np.column_stack([np.interp(u, s, pts[:, 0]), np.interp(u, s, pts[:, 1])])


def make_shape(kind: str, size: float = 1.0, center=(0.0, 0.0), spacing: float = 0.01, lemniscate: str = "gerono"):
    """Closed reference waypoints for ``circle``, ``square`` or ``infinite``."""
    if size <= 0:
        raise ValueError("size must be positive")
    cx, cy = center
    if kind == "circle":
        n = int(np.ceil(2 * np.pi * size / spacing))
        t = np.arange(n) * (2 * np.pi / n)
        pts = np.column_stack([size * np.cos(t), size * np.sin(t)])
        return pts + (cx, cy)
    if kind == "square":
        corners = size * np.array([[1.0, -1.0], [1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]])
        return resample(corners, spacing, closed=True) + (cx, cy)
    if kind == "infinite":
        t = np.linspace(0.0, 2 * np.pi, 20001)[:-1]
        if lemniscate == "gerono":
            pts = np.column_stack([size * np.sin(t), size * np.sin(t) * np.cos(t)])
        elif lemniscate == "bernoulli":
            den = 1.0 + np.sin(t) ** 2
            pts = np.column_stack([size * np.cos(t) / den, size * np.sin(t) * np.cos(t) / den])
        else:
            raise ValueError(f"unknown lemniscate {lemniscate!r}")
        return resample(pts, spacing, closed=True) + (cx, cy)
    raise ValueError(f"unknown shape {kind!r}; valid shapes: circle, square, infinite")


@dataclass
class PathSpec:
    kind: str = "circle"
    size: float = 1.0
    center: tuple = (0.0, 0.0)
    lookahead_r: float = 0.25
    target_speed: float = 0.2
    spacing: float = 0.01
    waypoints: np.ndarray | None = None
    lemniscate: str = "gerono"
    closed: bool = field(init=False)

    def __post_init__(self):
        if self.kind not in SHAPES:
            raise ValueError(f"unknown shape {self.kind!r}; valid shapes: {', '.join(SHAPES[:3])}")
        if self.lookahead_r <= 0 or self.target_speed <= 0:
            raise ValueError("lookahead_r and target_speed must be positive")
        self.closed = self.kind != "polyline"
        if self.kind == "polyline":
            if self.waypoints is None or len(self.waypoints) < 2:
                raise ValueError("polyline needs at least two waypoints")
            self.waypoints = resample(self.waypoints, self.spacing, closed=False)
        else:
            self.waypoints = make_shape(self.kind, self.size, self.center, self.spacing, self.lemniscate)

    def distance_to_path(self, points) -> np.ndarray:
        """Distance from each point to the nearest waypoint."""
        p = np.atleast_2d(points)
        d = np.linalg.norm(p[:, None, :] - self.waypoints[None, :, :], axis=-1)
        return d.min(axis=1)


def lookahead_target(position, path: PathSpec, cursor: int = 0):
    """Look-ahead point and updated progress cursor.

    ``cursor`` counts waypoints travelled (it keeps growing across laps of a
    closed path).  Starting at the cursor, the first waypoint inside the
    look-ahead circle opens a run of inside points; the last point of that run
    (where the path leaves the circle) is the target.  With no waypoint inside
    the circle the globally nearest waypoint is returned.
    """
    wp = path.waypoints
    n = len(wp)
    d = np.linalg.norm(wp - np.asarray(position, dtype=float), axis=1)
    if path.closed:
        idx = (cursor + np.arange(n)) % n
    else:
        idx = np.arange(min(cursor, n - 1), n)
    inside = d[idx] <= path.lookahead_r
    if not inside.any():
        nearest = int(np.argmin(d))
        if path.closed:
            new_cursor = cursor + (nearest - cursor) % n
        else:
            new_cursor = nearest
        return wp[nearest].copy(), int(new_cursor)
    first = int(np.argmax(inside))
    outside_after = ~inside[first:]
    end = first + (int(np.argmax(outside_after)) - 1 if outside_after.any() else len(outside_after) - 1)
    return wp[idx[end]].copy(), int(cursor + end if path.closed else idx[end])


class PurePursuitTracker:
    """Stateful wrapper holding the cursor and the last commanded direction."""

    def __init__(self, path: PathSpec):
        self.path = path
        self.cursor = 0
        self.direction = None

    def command(self, position) -> np.ndarray:
        point, self.cursor = lookahead_target(position, self.path, self.cursor)
        delta = point - np.asarray(position, dtype=float)
        norm = np.linalg.norm(delta)
        if norm > 1e-12:
            self.direction = delta / norm
        elif self.direction is None:
            # degenerate start exactly on the target: head along the path
            tangent = self.path.waypoints[1] - self.path.waypoints[0]
            self.direction = tangent / np.linalg.norm(tangent)
        return self.path.target_speed * self.direction

    def velocity_command(self, position) -> TaskSpec:
        v = self.command(position)
        return TaskSpec(TRACK_VELOCITY, target_velocity=(float(v[0]), float(v[1]), 0.0))


def velocity_command(position, path: PathSpec, cursor: int = 0, previous_direction=None):
    """Functional form: ``(TaskSpec, cursor', direction)``."""
    tracker = PurePursuitTracker(path)
    tracker.cursor, tracker.direction = cursor, previous_direction
    spec = tracker.velocity_command(position)
    return spec, tracker.cursor, tracker.direction


def lap_steps(path: PathSpec, dt: float) -> int:
    wp = path.waypoints
    closed = np.vstack([wp, wp[:1]]) if path.closed else wp
    length = np.linalg.norm(np.diff(closed, axis=0), axis=1).sum()
    return int(np.ceil(length / (path.target_speed * dt)))
