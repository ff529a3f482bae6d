"""Keyframe motion player: cubic Hermite interpolation, effort fades, and
orientation-feedback PID offsets for selected joints.

A motion is a named list of keyframes over a fixed joint set. Each keyframe
pins time, per-joint position and velocity, per-joint effort in [0, 1], the
set of joints receiving feedback offsets, and which foot carries the robot.
Between keyframes positions follow the cubic Hermite interpolant (the splines
hit keyframe positions and velocities exactly, so the track is C1), efforts
ramp linearly, and the support flag holds from the segment's left keyframe.

Playback samples the interpolant on a fixed clock and adds PID corrections
driven by the fused pitch/roll deviation to the joints that enable them. The
derivative term is low-pass filtered (one pole, 10 Hz) before use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from .serialize import canonical_json

__all__ = [
    "MotionError",
    "Keyframe",
    "Motion",
    "PidGains",
    "InterpolatedSample",
    "PlaySample",
    "interpolate",
    "play",
    "fade",
    "motion_from_dict",
    "motion_to_dict",
    "motion_bytes",
    "load_motion",
    "save_motion",
    "motions_dir",
    "DERIVATIVE_CUTOFF_HZ",
]

SUPPORT_MODES = ("left", "right", "both")
DERIVATIVE_CUTOFF_HZ = 10.0


class MotionError(ValueError):
    pass


@dataclass(frozen=True)
class Keyframe:
    time: float
    positions: dict[str, float]
    velocities: dict[str, float]
    efforts: dict[str, float]
    pid_joints: tuple[str, ...] = ()
    support: str = "both"


@dataclass(frozen=True)
class PidGains:
    axis: str  # "pitch" or "roll"
    p: float = 0.0
    i: float = 0.0
    d: float = 0.0
    i_max: float = 1.0  # integral clamp, rad*s

    def __post_init__(self):
        if self.axis not in ("pitch", "roll"):
            raise MotionError(f"pid axis must be pitch or roll, got {self.axis!r}")
        for name in ("p", "i", "d", "i_max"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise MotionError(f"pid gain {name} must be finite and non-negative")


@dataclass(frozen=True)
class Motion:
    name: str
    joints: tuple[str, ...]
    keyframes: tuple[Keyframe, ...]
    pid_gains: dict[str, PidGains] = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise MotionError("motion needs a name")
        if len(set(self.joints)) != len(self.joints):
            raise MotionError("duplicate joint in joint list")
        if not self.keyframes:
            raise MotionError("motion needs at least one keyframe")
        prev = -math.inf
        joint_set = set(self.joints)
        for idx, kf in enumerate(self.keyframes):
            where = f"keyframe {idx}"
            if kf.time < 0.0 or not math.isfinite(kf.time):
                raise MotionError(f"{where}: time must be finite and >= 0")
            if kf.time <= prev:
                raise MotionError(f"{where}: times must be strictly increasing")
            prev = kf.time
            if set(kf.positions) != joint_set:
                raise MotionError(f"{where}: positions must cover exactly the joint list")
            if not set(kf.velocities) <= joint_set or not set(kf.efforts) <= joint_set:
                raise MotionError(f"{where}: velocity/effort keys outside joint list")
            for j, e in kf.efforts.items():
                if not 0.0 <= e <= 1.0:
                    raise MotionError(f"{where}: effort for {j} outside [0, 1]")
            if not set(kf.pid_joints) <= joint_set:
                raise MotionError(f"{where}: pid joint outside joint list")
            if kf.support not in SUPPORT_MODES:
                raise MotionError(f"{where}: support must be one of {SUPPORT_MODES}")
        if not set(self.pid_gains) <= joint_set:
            raise MotionError("pid_gains key outside joint list")

    @property
    def duration(self) -> float:
        return self.keyframes[-1].time

    @property
    def start_time(self) -> float:
        return self.keyframes[0].time


@dataclass(frozen=True)
class InterpolatedSample:
    time: float
    positions: dict[str, float]
    velocities: dict[str, float]
    efforts: dict[str, float]
    support: str


@dataclass(frozen=True)
class PlaySample:
    time: float
    positions: dict[str, float]
    velocities: dict[str, float]
    efforts: dict[str, float]
    support: str
    pid_offsets: dict[str, float]


def _kf_vel(kf: Keyframe, joint: str) -> float:
    return kf.velocities.get(joint, 0.0)


def _kf_eff(kf: Keyframe, joint: str) -> float:
    return kf.efforts.get(joint, 1.0)


def interpolate(motion: Motion, t: float) -> InterpolatedSample:
    """Cubic Hermite position/velocity and linear effort at time t.

    Times outside the keyframe span clamp to the endpoints.
    """
    frames = motion.keyframes
    if t <= frames[0].time or len(frames) == 1:
        kf = frames[0]
        return InterpolatedSample(
            time=max(t, kf.time),
            positions=dict(kf.positions),
            velocities={j: _kf_vel(kf, j) for j in motion.joints},
            efforts={j: _kf_eff(kf, j) for j in motion.joints},
            support=kf.support,
        )
    if t >= frames[-1].time:
        kf = frames[-1]
        return InterpolatedSample(
            time=min(t, kf.time),
            positions=dict(kf.positions),
            velocities={j: _kf_vel(kf, j) for j in motion.joints},
            efforts={j: _kf_eff(kf, j) for j in motion.joints},
            support=kf.support,
        )

    times = [kf.time for kf in frames]
    seg = int(np.searchsorted(times, t, side="right")) - 1
    a, b = frames[seg], frames[seg + 1]
    h = b.time - a.time
    s = (t - a.time) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    g00 = (6.0 * s2 - 6.0 * s) / h
    g10 = 3.0 * s2 - 4.0 * s + 1.0
    g01 = (-6.0 * s2 + 6.0 * s) / h
    g11 = 3.0 * s2 - 2.0 * s

    positions = {}
    velocities = {}
    efforts = {}
    for j in motion.joints:
        p0, p1 = a.positions[j], b.positions[j]
        v0, v1 = _kf_vel(a, j), _kf_vel(b, j)
        positions[j] = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1
        velocities[j] = g00 * p0 + g10 * v0 + g01 * p1 + g11 * v1
        e0, e1 = _kf_eff(a, j), _kf_eff(b, j)
        efforts[j] = e0 + (e1 - e0) * s
    return InterpolatedSample(time=t, positions=positions, velocities=velocities,
                              efforts=efforts, support=a.support)


def _active_pid_joints(motion: Motion, t: float) -> tuple[str, ...]:
    frames = motion.keyframes
    if t <= frames[0].time:
        return frames[0].pid_joints
    for kf in reversed(frames):
        if kf.time <= t:
            return kf.pid_joints
    return frames[0].pid_joints


def play(
    motion: Motion,
    dt: float,
    fused_errors: Iterable[tuple[float, float]],
) -> Iterator[PlaySample]:
    """Sample the motion on a fixed clock, mixing in PID feedback offsets.

    fused_errors yields one (pitch deviation, roll deviation) pair per tick;
    joints listed in the active keyframe's pid set receive an offset from
    their configured gains. The stream ends at the last keyframe time, give
    or take one tick.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    t_start = motion.start_time
    t_end = motion.duration
    n_ticks = max(1, math.ceil((t_end - t_start) / dt - 1e-12))

    err_iter = iter(fused_errors)
    integral = {"pitch": 0.0, "roll": 0.0}
    d_filt = {"pitch": 0.0, "roll": 0.0}
    prev = {"pitch": 0.0, "roll": 0.0}
    primed = False
    alpha = dt / (dt + 1.0 / (2.0 * math.pi * DERIVATIVE_CUTOFF_HZ))

    for k in range(n_ticks + 1):
        t = min(t_start + k * dt, t_end)
        try:
            e_pitch, e_roll = next(err_iter)
        except StopIteration:
            e_pitch, e_roll = 0.0, 0.0
        err = {"pitch": e_pitch, "roll": e_roll}
        for axis in ("pitch", "roll"):
            integral[axis] += err[axis] * dt
            raw = (err[axis] - prev[axis]) / dt if primed else 0.0
            d_filt[axis] += alpha * (raw - d_filt[axis])
            prev[axis] = err[axis]
        primed = True

        base = interpolate(motion, t)
        offsets = {}
        positions = dict(base.positions)
        for j in _active_pid_joints(motion, t):
            gains = motion.pid_gains.get(j)
            if gains is None:
                continue
            axis = gains.axis
            i_term = max(-gains.i_max, min(gains.i_max, integral[axis]))
            off = gains.p * err[axis] + gains.i * i_term + gains.d * d_filt[axis]
            offsets[j] = off
            positions[j] = positions[j] + off
        yield PlaySample(time=t, positions=positions, velocities=base.velocities,
                         efforts=base.efforts, support=base.support, pid_offsets=offsets)


def fade(current: Mapping[str, float], target: float, duration: float):
    """Linear per-joint effort ramp; returns efforts_at(t), clamped to [0, 1]."""
    if duration <= 0.0:
        raise ValueError("duration must be > 0")
    start = {j: min(1.0, max(0.0, v)) for j, v in current.items()}
    goal = min(1.0, max(0.0, target))

    def efforts_at(t: float) -> dict[str, float]:
        s = min(1.0, max(0.0, t / duration))
        return {j: v + (goal - v) * s for j, v in start.items()}

    return efforts_at


def motion_to_dict(motion: Motion) -> dict:
    return {
        "name": motion.name,
        "joints": list(motion.joints),
        "keyframes": [
            {
                "t": kf.time,
                "pos": dict(kf.positions),
                "vel": dict(kf.velocities),
                "eff": dict(kf.efforts),
                "pid": list(kf.pid_joints),
                "support": kf.support,
            }
            for kf in motion.keyframes
        ],
        "pid_gains": {
            j: {"axis": g.axis, "p": g.p, "i": g.i, "d": g.d, "i_max": g.i_max}
            for j, g in motion.pid_gains.items()
        },
    }


def motion_from_dict(doc: Mapping) -> Motion:
    try:
        name = doc["name"]
        joints = tuple(doc["joints"])
        raw_frames = doc["keyframes"]
    except KeyError as err:
        raise MotionError(f"missing motion key: {err.args[0]}") from None
    frames = []
    for raw in raw_frames:
        try:
            frames.append(Keyframe(
                time=float(raw["t"]),
                positions={j: float(v) for j, v in raw["pos"].items()},
                velocities={j: float(v) for j, v in raw.get("vel", {}).items()},
                efforts={j: float(v) for j, v in raw.get("eff", {}).items()},
                pid_joints=tuple(raw.get("pid", ())),
                support=raw.get("support", "both"),
            ))
        except KeyError as err:
            raise MotionError(f"keyframe missing key: {err.args[0]}") from None
    gains = {}
    for j, g in doc.get("pid_gains", {}).items():
        gains[j] = PidGains(axis=g.get("axis", "pitch"), p=float(g.get("p", 0.0)),
                            i=float(g.get("i", 0.0)), d=float(g.get("d", 0.0)),
                            i_max=float(g.get("i_max", 1.0)))
    return Motion(name=name, joints=joints, keyframes=tuple(frames), pid_gains=gains)


def motion_bytes(motion: Motion) -> bytes:
    return canonical_json(motion_to_dict(motion))


def save_motion(motion: Motion, path: str | Path) -> None:
    Path(path).write_bytes(motion_bytes(motion))


def load_motion(path: str | Path) -> Motion:
    import json

    return motion_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def motions_dir() -> Path:
    return Path(__file__).parent / "data" / "motions"
