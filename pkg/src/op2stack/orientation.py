"""Trunk orientation: fused-angles representation and the IMU filter.

The fused-angles decomposition splits a rotation into a z-rotation (fused
yaw) composed with a pure tilt whose axis lies in the horizontal plane. The
tilt is parameterized by fused pitch and fused roll, which are symmetric in
role, plus a hemisphere flag that records whether the body z axis still
points into the upper half-space. Unlike Euler angles there is no ordering
asymmetry between pitch and roll, and the representation is unique for every
rotation except the single tilt = 180 deg case.

Orientation estimation uses a passive nonlinear complementary filter: the
gyro integrates the quaternion state directly while the accelerometer's
gravity direction feeds a proportional correction term plus an integral
gyro-bias estimate. Yaw is unobservable without a magnetometer and is left
to drift with the (estimated) gyro bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    quat_conjugate,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    wrap_angle,
)

__all__ = [
    "FusedAngles",
    "ImuSample",
    "FilterState",
    "quat_to_fused",
    "fused_to_quat",
    "filter_update",
]

FREE_FALL_ACCEL_FLOOR = 1.0  # m/s^2; below this the accel direction is noise
_TILT_SINGULARITY = 1e-12


@dataclass(frozen=True)
class FusedAngles:
    fused_yaw: float  # (-pi, pi]
    fused_pitch: float  # [-pi/2, pi/2]
    fused_roll: float  # [-pi/2, pi/2]
    hemisphere: int = 1  # +1 body z up, -1 body z down

    def as_tuple(self) -> tuple[float, float, float, int]:
        return (self.fused_yaw, self.fused_pitch, self.fused_roll, self.hemisphere)


@dataclass(frozen=True)
class ImuSample:
    gyro: np.ndarray  # rad/s, body frame
    accel: np.ndarray  # m/s^2, body frame (reads +g on z when level and static)
    dt: float  # s


@dataclass(frozen=True)
class FilterState:
    q_est: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    gyro_bias_est: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kp: float = 2.0
    ki: float = 0.05


def quat_to_fused(q: np.ndarray) -> FusedAngles:
    """Decompose a rotation into fused yaw, pitch, roll, and hemisphere."""
    q = quat_normalize(np.asarray(q, dtype=float))
    w, x, y, z = q

    if w * w + z * z < _TILT_SINGULARITY:
        # Tilt is exactly 180 deg: the generic yaw extraction degenerates, but
        # the rotation is still R_z(yaw) composed with a flip about x.
        yaw = math.atan2(2.0 * x * y, 1.0 - 2.0 * y * y)
        return FusedAngles(wrap_angle(yaw), 0.0, 0.0, -1)

    yaw = wrap_angle(2.0 * math.atan2(z, w))

    # Body z axis in global coordinates (third column of the rotation matrix).
    u = np.array(
        [
            2.0 * (x * z + w * y),
            2.0 * (y * z - w * x),
            1.0 - 2.0 * (x * x + y * y),
        ]
    )
    # Remove the yaw rotation; the leftover tilt's z column defines the angles.
    cy, sy = math.cos(yaw), math.sin(yaw)
    zt = np.array([cy * u[0] + sy * u[1], -sy * u[0] + cy * u[1], u[2]])

    pitch = math.asin(min(1.0, max(-1.0, zt[0])))
    roll = math.asin(min(1.0, max(-1.0, -zt[1])))
    hemisphere = -1 if zt[2] < 0.0 else 1
    return FusedAngles(yaw, pitch, roll, hemisphere)


def fused_to_quat(f: FusedAngles) -> np.ndarray:
    """Reconstruct the unit quaternion for a fused-angles tuple."""
    sp = math.sin(f.fused_pitch)
    sr = math.sin(f.fused_roll)
    crit = sp * sp + sr * sr
    if crit > 1.0 + 1e-12:
        raise ValueError(f"invalid fused angles: sin^2(pitch) + sin^2(roll) = {crit:.6f} > 1")
    cz = math.sqrt(max(0.0, 1.0 - crit))
    if f.hemisphere not in (1, -1):
        raise ValueError(f"hemisphere must be +1 or -1, got {f.hemisphere}")
    zt = np.array([sp, -sr, f.hemisphere * cz])

    # Pure tilt taking e_z to zt: axis is horizontal and orthogonal to the
    # projection of zt, angle from the arc between the two unit vectors.
    r = math.hypot(zt[0], zt[1])
    if r < _TILT_SINGULARITY:
        if zt[2] >= 0.0:
            q_tilt = np.array([1.0, 0.0, 0.0, 0.0])
        else:
            q_tilt = np.array([0.0, 1.0, 0.0, 0.0])  # 180 deg about x by convention
    else:
        angle = math.atan2(r, zt[2])
        axis = np.array([-zt[1] / r, zt[0] / r, 0.0])
        half = 0.5 * angle
        q_tilt = np.concatenate(([math.cos(half)], math.sin(half) * axis))

    half_yaw = 0.5 * f.fused_yaw
    q_yaw = np.array([math.cos(half_yaw), 0.0, 0.0, math.sin(half_yaw)])
    return quat_normalize(quat_multiply(q_yaw, q_tilt))


def filter_update(state: FilterState, sample: ImuSample) -> FilterState:
    """One passive complementary filter step; pure state-in/state-out."""
    dt = float(sample.dt)
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    gyro = np.asarray(sample.gyro, dtype=float)
    accel = np.asarray(sample.accel, dtype=float)

    accel_norm = float(np.linalg.norm(accel))
    if accel_norm < FREE_FALL_ACCEL_FLOOR:
        correction = np.zeros(3)
    else:
        v_meas = accel / accel_norm
        # Predicted gravity direction in the body frame.
        v_pred = quat_rotate(quat_conjugate(state.q_est), np.array([0.0, 0.0, 1.0]))
        correction = np.cross(v_meas, v_pred)

    omega = gyro - state.gyro_bias_est + state.kp * correction
    q_new = quat_normalize(quat_multiply(state.q_est, quat_from_rotvec(omega * dt)))
    bias_new = state.gyro_bias_est - state.ki * correction * dt
    return replace(state, q_est=q_new, gyro_bias_est=bias_new)
