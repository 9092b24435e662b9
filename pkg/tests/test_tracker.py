import numpy as np
import pytest

from fpcontrol.bench import LQRDriver, PerfectFollower, run_tracking
from fpcontrol.env import TRACK_VELOCITY
from fpcontrol.tracker import PathSpec, PurePursuitTracker, lookahead_target, make_shape, velocity_command


def spacing(wp, closed=True):
    pts = np.vstack([wp, wp[:1]]) if closed else wp
    return np.linalg.norm(np.diff(pts, axis=0), axis=1)


@pytest.mark.parametrize("kind", ["circle", "square", "infinite"])
def test_spacing_at_most_one_centimetre(kind):
    assert spacing(make_shape(kind, 1.0)).max() <= 0.01 + 1e-12


def test_circle_radius():
    wp = make_shape("circle", 1.0, center=(2.0, -1.0))
    np.testing.assert_allclose(np.hypot(wp[:, 0] - 2.0, wp[:, 1] + 1.0), 1.0, atol=1e-9)


def test_square_perimeter():
    assert spacing(make_shape("square", 1.0)).sum() == pytest.approx(8.0, abs=1e-9)
    wp = make_shape("square", 1.0)
    assert np.abs(wp).max() == pytest.approx(1.0)


def test_lemniscate_crosses_centre_twice():
    wp = make_shape("infinite", 1.0)
    near = np.hypot(*wp.T) < 0.006
    # count separate visits
    visits = np.count_nonzero(near & ~np.roll(near, 1))
    assert visits == 2


def test_bad_shapes():
    with pytest.raises(ValueError, match="valid shapes"):
        make_shape("hexagon")
    with pytest.raises(ValueError):
        make_shape("circle", size=0)
    with pytest.raises(ValueError):
        PathSpec("circle", lookahead_r=0)


def test_straight_line_target():
    path = PathSpec("polyline", waypoints=np.array([[-1.0, 0.0], [3.0, 0.0]]), lookahead_r=0.5)
    point, cursor = lookahead_target((0.0, 0.0), path, 0)
    np.testing.assert_allclose(point, (0.5, 0.0), atol=0.01)


def test_reacquires_nearest():
    path = PathSpec("polyline", waypoints=np.array([[0.0, 0.0], [1.0, 0.0]]))
    point, _ = lookahead_target((0.3, 5.0), path, 0)
    np.testing.assert_allclose(point, (0.3, 0.0), atol=0.01)


def test_circle_chord_geometry():
    path = PathSpec("circle", size=1.0, lookahead_r=0.25)
    tr = PurePursuitTracker(path)
    start = path.waypoints[0]
    point, _ = lookahead_target(start, path, 0)
    ang = np.arctan2(point[1], point[0]) - np.arctan2(start[1], start[0])
    assert ang == pytest.approx(2 * np.arcsin(0.25 / 2), abs=0.011)
    assert tr.cursor == 0


def test_cursor_monotone_near_path():
    path = PathSpec("infinite", size=1.0)
    tr = PurePursuitTracker(path)
    pos = path.waypoints[0].copy()
    last = 0
    for _ in range(300):
        v = tr.command(pos)
        pos = pos + v * 0.2
        assert tr.cursor >= last
        last = tr.cursor
    # crossing the centre must not jump to the other lobe: progress stays smooth
    assert last > len(path.waypoints) * 0.8


def test_velocity_command_speed_and_direction():
    path = PathSpec("polyline", waypoints=np.array([[0.0, 0.0], [0.0, 3.0]]))
    spec, cursor, direction = velocity_command((0.0, 0.0), path)
    assert spec.kind == TRACK_VELOCITY
    np.testing.assert_allclose(spec.target_velocity, (0.0, 0.2, 0.0), atol=1e-12)
    rng = np.random.default_rng(0)
    for p in rng.uniform(-1, 1, size=(20, 2)):
        s, _, _ = velocity_command(p, PathSpec("square"))
        assert np.hypot(*s.target_velocity[:2]) == pytest.approx(0.2)


def test_zero_length_holds_direction():
    path = PathSpec("polyline", waypoints=np.array([[0.0, 0.0], [1.0, 0.0]]), lookahead_r=0.25)
    _, cursor, d = velocity_command((0.0, 0.0), path)
    end = path.waypoints[-1]
    spec, _, d2 = velocity_command(end, path, cursor=len(path.waypoints) - 1, previous_direction=np.array([0.0, 1.0]))
    np.testing.assert_allclose(d2, (0.0, 1.0))


def test_square_corner_turns():
    path = PathSpec("square", size=1.0)
    tr = PurePursuitTracker(path)
    dirs = []
    pos = path.waypoints[0].copy()
    for _ in range(60):
        v = tr.command(pos)
        dirs.append(v / 0.2)
        pos = pos + v * 0.2
    dirs = np.array(dirs)
    # heading along +y on the first side, then -x on the second
    assert dirs[5] @ np.array([0.0, 1.0]) > 0.99
    assert dirs[-1] @ np.array([-1.0, 0.0]) > 0.99


def test_perfect_follower_stays_near_circle():
    path = PathSpec("circle", size=1.0)
    run = run_tracking(PerfectFollower(), path)
    bound = path.lookahead_r + path.target_speed * 0.2
    assert path.distance_to_path(run.positions).max() <= bound
    assert np.hypot(*(run.positions[-1] - path.waypoints[0])) < 0.3
    assert run.velocity_errors.max() == 0.0


def test_square_harder_than_circle():
    # mean velocity error, the per-shape quantity of the velocity report
    circle = run_tracking(LQRDriver(), PathSpec("circle")).velocity_errors.mean()
    square = run_tracking(LQRDriver(), PathSpec("square")).velocity_errors.mean()
    assert square > circle
    # the kinematic oracle has zero error on every shape
    assert run_tracking(PerfectFollower(), PathSpec("square")).velocity_errors.mean() >= 0.0
