"""Discrete-time infinite-horizon LQR with on/off thruster allocation.

The controller works on a 7-dimensional error state
``(x, y, vx, vy, qw, qz, omega)`` where ``(qw, qz)`` is the planar error
quaternion relative to the goal heading.  ``(A, B)`` come from central
differences of the simulator itself and are refreshed periodically; the
continuous command ``U = -K X`` is normalized to [0, 1] and rounded to the
closest binary thruster pattern.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import dynamics as dyn

logger = logging.getLogger(__name__)

LQR_STATE = ("x", "y", "vx", "vy", "qw", "qz", "omega")
QUAT = slice(4, 6)
N_U = dyn.N_THRUSTERS

DEFAULT_Q = (0.0001, 1e-05, 100.0, 100.0, 1e-06, 1e-06, 1.0)
DEFAULT_R = (0.01,) * N_U
DEFAULT_W = (0.1,) * 7
# order in which DEFAULT_Q is read; see LqrWeights
DEFAULT_Q_ORDER = ("qw", "qz", "x", "y", "vx", "vy", "omega")


class DareError(RuntimeError):
    pass


@dataclass(frozen=True)
class LqrWeights:
    """Diagonal cost weights.

    ``q_order`` names the state component each entry of ``q`` applies to, so a
    weight table written in another ordering can be used verbatim.  ``w`` is
    carried for completeness and not used by the control law.
    """

    q: tuple = DEFAULT_Q
    r: tuple = DEFAULT_R
    w: tuple = DEFAULT_W
    q_order: tuple = DEFAULT_Q_ORDER

    def __post_init__(self):
        if len(self.q) != 7 or len(self.w) != 7 or len(self.r) != N_U:
            raise ValueError("q and w need 7 entries, r needs 8")
        if sorted(self.q_order) != sorted(LQR_STATE):
            raise ValueError(f"q_order must be a permutation of {LQR_STATE}")
        if min(self.q) < 0 or min(self.w) < 0 or min(self.r) <= 0:
            raise ValueError("q, w must be >= 0 and r > 0")

    @property
    def Q(self) -> np.ndarray:
        diag = np.zeros(7)
        for name, val in zip(self.q_order, self.q):
            diag[LQR_STATE.index(name)] = val
        return np.diag(diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.asarray(self.r, dtype=float))


def quat_from_angle(theta):
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta / 2), np.sin(theta / 2)], axis=-1)


def error_state(states, goal_pose, goal_velocity=(0.0, 0.0)) -> np.ndarray:
    """LQR error state for ``(..., 6)`` platform states; quaternion kept raw (qw near 1)."""
    s = np.asarray(states, dtype=float)
    g = np.asarray(goal_pose, dtype=float)
    gv = np.asarray(goal_velocity, dtype=float)
    out = np.empty(s.shape[:-1] + (7,))
    out[..., 0] = s[..., dyn.X] - g[..., 0]
    out[..., 1] = s[..., dyn.Y] - g[..., 1]
    out[..., 2] = s[..., dyn.VX] - gv[..., 0]
    out[..., 3] = s[..., dyn.VY] - gv[..., 1]
    # wrapped error puts the identity-adjacent quaternion (qw >= 0) first
    out[..., QUAT] = quat_from_angle(dyn.wrap_angle(s[..., dyn.THETA] - g[..., 2]))
    out[..., 6] = s[..., dyn.OMEGA]
    return out


def regulation_error(x_err) -> np.ndarray:
    """Shift the quaternion so that zero heading error is the origin."""
    x = np.array(x_err, dtype=float)
    x[..., 4] -= 1.0
    return x


def platform_oracle(params: dyn.PlatformParams, goal_heading: float = 0.0):
    """One-control-step map ``(X, U) -> X'`` on error states, with continuous thruster forces.

    Accepts batches ``(k, 7)``, ``(k, 8)``.  The heading is not wrapped on
    output so the quaternion stays continuous around the input.
    """

    def f(X, U):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = np.atleast_2d(np.asarray(U, dtype=float))
        delta = 2.0 * np.arctan2(X[:, 5], X[:, 4])
        theta = goal_heading + delta
        c, s = np.cos(theta), np.sin(theta)
        w = dyn.wrench_from_forces(U, params)
        dt = params.control_dt
        vx = X[:, 2] + (c * w[:, 0] - s * w[:, 1]) / params.mass * dt
        vy = X[:, 3] + (s * w[:, 0] + c * w[:, 1]) / params.mass * dt
        om = X[:, 6] + w[:, 2] / params.inertia * dt
        out = np.empty_like(X)
        out[:, 0] = X[:, 0] + vx * dt
        out[:, 1] = X[:, 1] + vy * dt
        out[:, 2] = vx
        out[:, 3] = vy
        out[:, QUAT] = quat_from_angle(delta + om * dt)
        out[:, 6] = om
        return out

    return f


def _T(M):
    return np.swapaxes(M, -1, -2)


def linearize(f, X0, U0, eps_x: float = 1e-4, eps_u: float = 1e-2):
    """Central-difference Jacobians ``A = df/dX`` and ``B = df/dU`` at ``(X0, U0)``.

    ``f`` must accept stacked ``(k, n)`` / ``(k, m)`` batches.  ``X0`` and
    ``U0`` may carry leading batch dimensions, in which case ``f`` is called
    once for all operating points and ``A``, ``B`` are stacked accordingly.
    Perturbed quaternion entries are re-normalized before evaluation.
    """
    X0 = np.asarray(X0, dtype=float)
    U0 = np.asarray(U0, dtype=float)
    batch = X0.shape[:-1]
    X0 = X0.reshape(-1, X0.shape[-1])
    U0 = np.broadcast_to(U0, X0.shape[:1] + U0.shape[-1:])
    n, m = X0.shape[1], U0.shape[1]
    k = 2 * n + 2 * m
    Xs = np.repeat(X0[:, None, :], k, axis=1)
    Us = np.repeat(U0[:, None, :], k, axis=1)
    j = np.arange(n)
    Xs[:, 2 * j, j] += eps_x
    Xs[:, 2 * j + 1, j] -= eps_x
    j = np.arange(m)
    Us[:, 2 * n + 2 * j, j] += eps_u
    Us[:, 2 * n + 2 * j + 1, j] -= eps_u
    q = Xs[..., QUAT]
    Xs[..., QUAT] = q / np.linalg.norm(q, axis=-1, keepdims=True)
    out = np.asarray(f(Xs.reshape(-1, n), Us.reshape(-1, m))).reshape(-1, k, n)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("dynamics oracle returned non-finite values during linearization")
    A = _T((out[:, 0 : 2 * n : 2] - out[:, 1 : 2 * n : 2]) / (2 * eps_x))
    B = _T((out[:, 2 * n :: 2] - out[:, 2 * n + 1 :: 2]) / (2 * eps_u))
    return A.reshape(batch + (n, n)), B.reshape(batch + (n, m))


def riccati_step(P, A, B, Q, R):
    AtP = _T(A) @ P
    return Q + AtP @ A - AtP @ B @ np.linalg.solve(R + _T(B) @ P @ B, _T(B) @ P @ A)


def dare_residual(P, A, B, Q, R) -> float:
    return float(np.max(np.abs(P - riccati_step(P, A, B, Q, R))))


def _sym(M):
    return 0.5 * (M + _T(M))


def solve_dare(A, B, Q, R, tol: float = 1e-9, max_iter: int = 100_000, method: str = "doubling", P0=None):
    """Stabilizing solution of the discrete algebraic Riccati equation.

    ``method="fixed_point"`` iterates the Riccati map from ``P0`` (default
    ``Q``) until successive iterates differ by less than ``tol`` in max-norm,
    which is exactly the Riccati residual of the returned ``P``.
    ``method="doubling"`` jumps along the iterate sequence at powers of two
    (structure-preserving doubling) before finishing with the same plain
    iterations.  Leading batch dimensions on ``A`` and ``B`` are supported.
    """
    A, B, Q, R = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, B, Q, R))
    if method not in ("doubling", "fixed_point"):
        raise ValueError(f"unknown DARE method {method!r}")
    n = A.shape[-1]
    batch = np.broadcast_shapes(A.shape[:-2], B.shape[:-2])
    P = np.broadcast_to(Q if P0 is None else np.asarray(P0, dtype=float), batch + (n, n)).copy()

    if method == "doubling" and P0 is None:
        Ak = np.broadcast_to(A, batch + (n, n)).copy()
        Gk = B @ np.linalg.solve(R, _T(B))
        Gk = np.broadcast_to(Gk, batch + (n, n)).copy()
        Hk = P.copy()
        eye = np.eye(n)
        # an unstabilizable pair overflows here; the fixed-point pass below reports it
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(64):
                W = eye + Gk @ Hk
                WA = np.linalg.solve(W, Ak)
                H_next = _sym(Hk + _T(Ak) @ Hk @ WA)
                Gk = _sym(Gk + Ak @ np.linalg.solve(W, Gk) @ _T(Ak))
                Ak = Ak @ WA
                step = np.max(np.abs(H_next - Hk))
                Hk = H_next
                if not np.all(np.isfinite(Hk)) or step <= tol * max(1.0, float(np.max(np.abs(Hk)))):
                    break
        if np.all(np.isfinite(Hk)):
            P = Hk

    for _ in range(max_iter):
        P_next = _sym(riccati_step(P, A, B, Q, R))
        if not np.all(np.isfinite(P_next)):
            break
        diff = np.max(np.abs(P_next - P))
        P = P_next
        if diff < tol:
            return P if batch else P.reshape(n, n)
    with np.errstate(all="ignore"):
        try:
            rho = np.max(spectral_radius(A - B @ gain(A, B, P, R)))
        except np.linalg.LinAlgError:
            rho = np.inf
    raise DareError(f"Riccati iteration did not converge in {max_iter} steps (closed-loop spectral radius {rho:.6g})")


def gain(A, B, P, R) -> np.ndarray:
    A, B, P, R = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, B, P, R))
    S = R + _T(B) @ P @ B
    if np.any(np.linalg.cond(S) > 1e14):
        raise np.linalg.LinAlgError("R + B'PB is singular")
    return np.linalg.solve(S, _T(B) @ P @ A)


def spectral_radius(M):
    rho = np.max(np.abs(np.linalg.eigvals(M)), axis=-1)
    return float(rho) if np.ndim(rho) == 0 else rho


def normalize_command(U, mode: str = "minmax") -> np.ndarray:
    """Map continuous thruster demands to [0, 1] row-wise."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if mode == "clamp":
        return np.clip(U, 0.0, 1.0)
    if mode != "minmax":
        raise ValueError(f"unknown normalization {mode!r}")
    lo = U.min(axis=1, keepdims=True)
    span = U.max(axis=1, keepdims=True) - lo
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (U - lo) / safe, 0.5)


def binarize(U_norm) -> np.ndarray:
    """Closest binary vector in squared error to an already-normalized command.

    The objective separates per component, so rounding at 0.5 (ties up) is the
    exact minimizer over all 2**8 patterns.
    """
    U_norm = np.asarray(U_norm, dtype=float)
    return U_norm >= 0.5


@dataclass
class LinearizedModel:
    A: np.ndarray
    B: np.ndarray
    P: np.ndarray
    K: np.ndarray
    relinearize_every: int = 1


class LQRController(BaseEstimator):
    """Relinearizing LQR regulator emitting binary thruster commands.

    ``fit`` builds the model at the goal (zero error, no thrust) and exposes
    ``A_``, ``B_``, ``P_``, ``K_``.  ``predict`` maps a batch of platform states
    to thruster bits, keeping one model per row that is rebuilt around the
    current state every ``relinearize_every`` calls.
    """

    def __init__(
        self,
        weights: LqrWeights | None = None,
        params: dyn.PlatformParams | None = None,
        relinearize_every: int = 1,
        eps_x: float = 1e-4,
        eps_u: float = 1e-2,
        normalization: str = "clamp",
        tol: float = 1e-9,
        max_iter: int = 100_000,
        dare_method: str = "doubling",
        zero_command_tol: float = 1e-12,
    ):
        self.weights = weights
        self.params = params
        self.relinearize_every = relinearize_every
        self.eps_x = eps_x
        self.eps_u = eps_u
        self.normalization = normalization
        self.tol = tol
        self.max_iter = max_iter
        self.dare_method = dare_method
        self.zero_command_tol = zero_command_tol

    def _weights(self) -> LqrWeights:
        return self.weights or LqrWeights()

    def _params(self) -> dyn.PlatformParams:
        return self.params or dyn.PlatformParams()

    def build_model(self, x_err, goal_heading=0.0) -> LinearizedModel:
        """Linearize at ``x_err`` (``(7,)`` or stacked ``(n, 7)``) and solve for the gain."""
        w = self._weights()
        x_err = np.asarray(x_err, dtype=float)
        heading = np.asarray(goal_heading, dtype=float)
        if x_err.ndim == 2:
            heading = np.repeat(np.broadcast_to(heading, x_err.shape[:1]), 2 * 7 + 2 * N_U)
        f = platform_oracle(self._params(), heading)
        A, B = linearize(f, x_err, np.zeros(N_U), self.eps_x, self.eps_u)
        P = solve_dare(A, B, w.Q, w.R, self.tol, self.max_iter, self.dare_method)
        K = gain(A, B, P, w.R)
        return LinearizedModel(A, B, P, K, self.relinearize_every)

    def fit(self, X=None, y=None):
        if self.relinearize_every < 1:
            raise ValueError("relinearize_every must be >= 1")
        x0 = error_state(np.zeros(dyn.STATE_DIM), np.zeros(3))
        model = self.build_model(x0)
        self.A_, self.B_, self.P_, self.K_ = model.A, model.B, model.P, model.K
        self.closed_loop_radius_ = spectral_radius(model.A - model.B @ model.K)
        self.n_solver_failures_ = 0
        self.reset(0)
        return self

    def reset(self, n_envs: int):
        """Forget per-row gains and restart the relinearization schedule."""
        self._gains = np.full((int(n_envs), N_U, 7), np.nan)
        self._calls = 0
        return self

    def _refresh(self, x_err, headings):
        try:
            self._gains = self.build_model(x_err, headings).K
            return
        except (DareError, np.linalg.LinAlgError, FloatingPointError):
            pass
        for i in range(x_err.shape[0]):
            try:
                self._gains[i] = self.build_model(x_err[i], headings[i]).K
            except (DareError, np.linalg.LinAlgError, FloatingPointError) as exc:
                logger.warning("LQR model rebuild failed for row %d: %s", i, exc)
                self.n_solver_failures_ += 1
                self._gains[i] = np.nan

    def continuous_command(self, states, goal_poses, goal_velocities=None) -> np.ndarray:
        """Unnormalized thruster demands ``U = -K X``; NaN rows mark solver failures."""
        check_is_fitted(self, "K_")
        states = np.atleast_2d(np.asarray(states, dtype=float))
        n = states.shape[0]
        goals = np.broadcast_to(np.asarray(goal_poses, dtype=float), (n, 3))
        gv = np.zeros((n, 2))
        if goal_velocities is not None:
            gv = np.broadcast_to(np.asarray(goal_velocities, dtype=float)[..., :2], (n, 2))
        if self._gains.shape[0] != n:
            self.reset(n)
        x_err = error_state(states, goals, gv)
        if self._calls % self.relinearize_every == 0:
            self._refresh(x_err, goals[:, 2])
        self._calls += 1
        return -np.einsum("nij,nj->ni", self._gains, regulation_error(x_err))

    def predict(self, states, goal_poses=(0.0, 0.0, 0.0), goal_velocities=None) -> np.ndarray:
        """Thruster bits ``(n, 8)`` for a batch of ``(n, 6)`` platform states.

        Rows whose model could not be built, or whose demand is numerically
        zero, get all thrusters off.
        """
        U = self.continuous_command(states, goal_poses, goal_velocities)
        finite = np.all(np.isfinite(U), axis=1)
        U = np.where(finite[:, None], U, 0.0)
        bits = binarize(normalize_command(U, self.normalization))
        bits[~finite | (np.max(np.abs(U), axis=1) <= self.zero_command_tol)] = False
        return bits
