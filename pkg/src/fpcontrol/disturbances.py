"""Disturbance channels: action noise, velocity noise, floor force, torque, thruster failure."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .dynamics import N_THRUSTERS, VX, VY, OMEGA

UF_MODES = ("constant", "sinusoidal")


@dataclass(frozen=True)
class DisturbanceProfile:
    """Magnitudes for one evaluation or training condition.

    ``uf_direction`` is the fixed floor-force angle in constant mode (``None``
    draws it per episode).  In sinusoidal mode the angle follows
    ``phi0 + amplitude * sin(2 pi t / period + phase)`` with ``t`` in control
    steps and ``phi0`` drawn per episode.
    """

    an: float = 0.0
    vn: float = 0.0
    vn_omega_scale: float = 1.0
    uf: float = 0.0
    uf_mode: str = "constant"
    uf_direction: float | None = None
    uf_amplitude: float = np.pi
    uf_period: float = 100.0
    uf_phase: float = 0.0
    td: float = 0.0
    rtf_count: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("an", "vn", "vn_omega_scale", "uf", "td"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.rtf_count <= N_THRUSTERS:
            raise ValueError(f"rtf_count must be in [0, {N_THRUSTERS}], got {self.rtf_count}")
        if self.uf_mode not in UF_MODES:
            raise ValueError(f"uf_mode must be one of {UF_MODES}")
        if self.uf_period <= 0:
            raise ValueError("uf_period must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpisodeDisturbance:
    """Per-episode draws, frozen until the next reset."""

    profile: DisturbanceProfile
    failed: np.ndarray
    uf_phi0: float
    td_sign: float

    @property
    def alive(self) -> np.ndarray:
        return ~self.failed


def episode_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(episode),)))


def sample_episode(profile: DisturbanceProfile, rng: np.random.Generator) -> EpisodeDisturbance:
    if not 0 <= profile.rtf_count <= N_THRUSTERS:
        raise ValueError(f"invalid profile: rtf_count={profile.rtf_count}")
    failed = np.zeros(N_THRUSTERS, dtype=bool)
    # draws happen unconditionally so the stream layout does not depend on magnitudes
    order = rng.permutation(N_THRUSTERS)
    failed[order[: profile.rtf_count]] = True
    phi = rng.uniform(0.0, 2.0 * np.pi)
    if profile.uf_mode == "constant" and profile.uf_direction is not None:
        phi = float(profile.uf_direction)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    failed.setflags(write=False)
    return EpisodeDisturbance(profile=profile, failed=failed, uf_phi0=float(phi), td_sign=sign)


def apply_failures(bits, failed) -> np.ndarray:
    return np.asarray(bits, dtype=bool) & ~np.asarray(failed, dtype=bool)


def corrupt_action(bits, ep: EpisodeDisturbance, rng: np.random.Generator):
    """Mask failed thrusters and draw per-thruster force noise in [-an, an]."""
    masked = apply_failures(bits, ep.failed)
    an = ep.profile.an
    if an > 0:
        noise = rng.uniform(-an, an, size=masked.shape)
    else:
        noise = np.zeros(masked.shape)
    return masked, noise


def velocity_noise(shape, profile: DisturbanceProfile, rng: np.random.Generator) -> np.ndarray:
    """Additive ``(vx, vy, omega)`` noise with trailing dimension 3."""
    if profile.vn <= 0:
        return np.zeros(tuple(shape) + (3,))
    noise = rng.uniform(-profile.vn, profile.vn, size=tuple(shape) + (3,))
    noise[..., 2] *= profile.vn_omega_scale
    return noise


def corrupt_observation(state, ep: EpisodeDisturbance, rng: np.random.Generator):
    """Return a copy of a ``(..., 6)`` state array with noisy velocities."""
    s = np.array(state, dtype=float)
    noise = velocity_noise(s.shape[:-1], ep.profile, rng)
    s[..., VX] += noise[..., 0]
    s[..., VY] += noise[..., 1]
    s[..., OMEGA] += noise[..., 2]
    return s


def floor_angle(profile: DisturbanceProfile, phi0, t):
    if profile.uf_mode == "constant":
        return np.asarray(phi0, dtype=float) + 0.0 * np.asarray(t, dtype=float)
    return phi0 + profile.uf_amplitude * np.sin(2.0 * np.pi * np.asarray(t) / profile.uf_period + profile.uf_phase)


def external_wrench(ep: EpisodeDisturbance, t) -> np.ndarray:
    """World-frame ``(Fx, Fy, Tz)`` from the floor slope and torque disturbance."""
    p = ep.profile
    phi = floor_angle(p, ep.uf_phi0, t)
    return np.array([p.uf * np.cos(phi), p.uf * np.sin(phi), ep.td_sign * p.td])
