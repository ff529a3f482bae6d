"""Open-loop omnidirectional gait core with fused-angle posture feedback.

One phase variable drives everything: a full 2*pi cycle holds two steps, the
legs running pi apart. Each leg alternates between a ground (stance) window
and a swing window, separated by double-support intervals whose combined
length is a configured fraction of the cycle.

The pattern is expressed in an abstract leg space: leg extension (0 folded,
1 straight), leg angles (direction of the hip-to-foot line), and foot angles
(sole attitude relative to the trunk). The stride waveform is built so that
at every touchdown the new stance foot lands exactly one step length
(vx / (2 f), in arc units) ahead of the other stance foot: the grounded leg
sweeps linearly like a conveyor while the swing leg returns along a smooth
cosine. Leg extension dips with a sin^2 bump during swing, which keeps the
whole trajectory C1.

Posture feedback adds corrective offsets from the fused pitch/roll deviation
(P plus low-pass-filtered D) with the following sign table, pinned by tests:

    +pitch deviation (leaning forward)  -> arms swing back (+), hips rotate
        trunk back (-), toes press down (+)
    +roll deviation (leaning right)     -> arms swing left (+), hips pull
        trunk left (-), right sole edge presses (+), right leg extends /
        left leg shortens (+- differential extension)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import rot_x, rot_y, rot_z, matrix_to_quat, wrap_angle
from .model import OutOfWorkspaceError, RobotModel, leg_inverse_kinematics
from .orientation import FusedAngles

__all__ = [
    "GaitCommand",
    "GaitParams",
    "GaitState",
    "LegTarget",
    "AbstractPose",
    "FeedbackGains",
    "FeedbackState",
    "advance_phase",
    "leg_phase",
    "abstract_pose",
    "apply_feedback",
    "abstract_to_joints",
]


@dataclass(frozen=True)
class GaitCommand:
    vx: float = 0.0  # m/s, + forward
    vy: float = 0.0  # m/s, + left
    omega: float = 0.0  # rad/s, + counterclockwise
    walking: bool = True


@dataclass(frozen=True)
class GaitParams:
    step_frequency: float = 2.4  # Hz, full cycle = two steps
    double_support_fraction: float = 0.1  # of the whole cycle
    base_extension: float = 0.9  # neutral leg extension in [0, 1]
    # Extension units removed at mid-swing. The knee fold rate scales with
    # this; 0.035 keeps the paired knee actuators under their no-load speed
    # at the default cadence.
    lift_amplitude: float = 0.035
    sway_amplitude: float = 0.06  # rad of coronal leg-roll sway
    arm_swing_gain: float = 0.8  # arm pitch per unit of sagittal leg pitch
    arm_roll_base: float = 0.15  # rad, arms held slightly outward
    elbow_base: float = -0.5  # rad, slight elbow bend
    leg_length: float = 0.585  # m, arc radius for velocity-to-angle scaling
    v_max: float = 0.5  # m/s
    omega_max: float = 1.5  # rad/s

    def __post_init__(self):
        if self.step_frequency <= 0:
            raise ValueError("step_frequency must be > 0")
        if not 0.0 <= self.double_support_fraction < 0.5:
            raise ValueError("double_support_fraction must be in [0, 0.5)")
        if not 0.0 < self.base_extension <= 1.0:
            raise ValueError("base_extension must be in (0, 1]")


@dataclass(frozen=True)
class GaitState:
    phase: float = 0.0  # [-pi, pi)
    params: GaitParams = field(default_factory=GaitParams)


@dataclass(frozen=True)
class LegTarget:
    extension: float  # eta in [0, 1]
    leg_roll: float = 0.0
    leg_pitch: float = 0.0
    leg_yaw: float = 0.0
    foot_pitch: float = 0.0
    foot_roll: float = 0.0


@dataclass(frozen=True)
class AbstractPose:
    left: LegTarget
    right: LegTarget
    left_arm_pitch: float = 0.0
    right_arm_pitch: float = 0.0
    arm_roll_offset: float = 0.0


@dataclass(frozen=True)
class FeedbackGains:
    arm_p: float = 0.0
    arm_d: float = 0.0
    hip_p: float = 0.0
    hip_d: float = 0.0
    foot_p: float = 0.0
    foot_d: float = 0.0
    ext_p: float = 0.0
    ext_d: float = 0.0

    def __post_init__(self):
        for name in ("arm_p", "arm_d", "hip_p", "hip_d", "foot_p", "foot_d", "ext_p", "ext_d"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass(frozen=True)
class FeedbackState:
    """Deviation memory for the filtered derivative terms."""

    prev_pitch: float = 0.0
    prev_roll: float = 0.0
    d_pitch: float = 0.0
    d_roll: float = 0.0
    primed: bool = False
    cutoff_hz: float = 10.0


def advance_phase(state: GaitState, dt: float) -> GaitState:
    if not 0.0 < dt <= 0.5:
        raise ValueError(f"dt must be in (0, 0.5], got {dt}")
    mu = wrap_angle(state.phase + 2.0 * math.pi * state.params.step_frequency * dt)
    if mu >= math.pi:  # wrap_angle returns (-pi, pi]; keep the [-pi, pi) convention
        mu -= 2.0 * math.pi
    return replace(state, phase=mu)


def leg_phase(mu: float, side: str) -> float:
    """Per-leg cycle variable: the legs run half a cycle apart."""
    nu = mu if side == "left" else mu - math.pi
    nu = math.fmod(nu + math.pi, 2.0 * math.pi)
    if nu < 0.0:
        nu += 2.0 * math.pi
    return nu - math.pi  # [-pi, pi)


def _swing_progress(nu: float, half_gap: float) -> float | None:
    """Map the swing window (half_gap, pi - half_gap) onto (0, 1), else None."""
    if half_gap < nu < math.pi - half_gap:
        return (nu - half_gap) / (math.pi - 2.0 * half_gap)
    return None


def _stride_wave(nu: float, half_gap: float) -> float:
    """Normalized stride position: +1 at touchdown, -1 at liftoff.

    Grounded part sweeps linearly (constant velocity conveyor), the swing
    part returns along a half cosine; both meet at the window edges.
    """
    s = _swing_progress(nu, half_gap)
    if s is not None:
        return -math.cos(math.pi * s)
    # Grounded: elapsed phase since touchdown at nu = pi - half_gap.
    elapsed = math.fmod(nu - (math.pi - half_gap) + 4.0 * math.pi, 2.0 * math.pi)
    return 1.0 - 2.0 * elapsed / (math.pi + 2.0 * half_gap)


def _lift_wave(nu: float, half_gap: float) -> float:
    s = _swing_progress(nu, half_gap)
    return math.sin(math.pi * s) ** 2 if s is not None else 0.0


def abstract_pose(state: GaitState, cmd: GaitCommand) -> AbstractPose:
    """Evaluate the open-loop pattern at the state's phase."""
    p = state.params
    if math.hypot(cmd.vx, cmd.vy) > p.v_max + 1e-12:
        raise ValueError(f"|(vx, vy)| exceeds v_max = {p.v_max} m/s")
    if abs(cmd.omega) > p.omega_max + 1e-12:
        raise ValueError(f"|omega| exceeds omega_max = {p.omega_max} rad/s")

    if not cmd.walking:
        neutral = LegTarget(extension=p.base_extension)
        return AbstractPose(left=neutral, right=neutral,
                            left_arm_pitch=0.0, right_arm_pitch=0.0)

    f = p.step_frequency
    half_gap = p.double_support_fraction * math.pi / 2.0
    # Stride amplitude: the grounded sweep spans the contact duration at the
    # commanded speed, so consecutive footfalls land one step apart exactly.
    contact = (math.pi + 2.0 * half_gap) / (2.0 * math.pi * f)  # seconds on ground
    amp_x = cmd.vx * contact / 2.0 / p.leg_length
    amp_y = cmd.vy * contact / 2.0 / p.leg_length
    amp_yaw = cmd.omega * contact / 2.0

    sway = p.sway_amplitude * math.sin(state.phase)

    legs = {}
    arm_pitch = {}
    for side in ("left", "right"):
        nu = leg_phase(state.phase, side)
        w = _stride_wave(nu, half_gap)
        lift = _lift_wave(nu, half_gap)
        leg_pitch = -amp_x * w
        legs[side] = LegTarget(
            extension=p.base_extension - p.lift_amplitude * lift,
            leg_roll=amp_y * w + sway,
            leg_pitch=leg_pitch,
            leg_yaw=amp_yaw * w,
        )
        # Counter-swing: arm goes back while the same-side leg goes forward.
        arm_pitch[side] = -p.arm_swing_gain * leg_pitch
    return AbstractPose(left=legs["left"], right=legs["right"],
                        left_arm_pitch=arm_pitch["left"], right_arm_pitch=arm_pitch["right"])


def apply_feedback(
    pose: AbstractPose,
    fused_est: FusedAngles,
    fused_ref: FusedAngles,
    gains: FeedbackGains,
    state: FeedbackState,
    dt: float,
) -> tuple[AbstractPose, FeedbackState]:
    """Add corrective offsets for the fused pitch/roll deviation."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    dev_pitch = wrap_angle(fused_est.fused_pitch - fused_ref.fused_pitch)
    dev_roll = wrap_angle(fused_est.fused_roll - fused_ref.fused_roll)

    # One-pole low-pass on the raw finite-difference derivative.
    alpha = dt / (dt + 1.0 / (2.0 * math.pi * state.cutoff_hz))
    if state.primed:
        raw_dp = (dev_pitch - state.prev_pitch) / dt
        raw_dr = (dev_roll - state.prev_roll) / dt
    else:
        raw_dp = raw_dr = 0.0
    d_pitch = state.d_pitch + alpha * (raw_dp - state.d_pitch)
    d_roll = state.d_roll + alpha * (raw_dr - state.d_roll)
    new_state = FeedbackState(prev_pitch=dev_pitch, prev_roll=dev_roll,
                              d_pitch=d_pitch, d_roll=d_roll, primed=True,
                              cutoff_hz=state.cutoff_hz)

    u_pitch = gains.arm_p * dev_pitch + gains.arm_d * d_pitch
    u_roll = gains.arm_p * dev_roll + gains.arm_d * d_roll
    hip_pitch = gains.hip_p * dev_pitch + gains.hip_d * d_pitch
    hip_roll = gains.hip_p * dev_roll + gains.hip_d * d_roll
    foot_pitch = gains.foot_p * dev_pitch + gains.foot_d * d_pitch
    foot_roll = gains.foot_p * dev_roll + gains.foot_d * d_roll
    ext = gains.ext_p * dev_roll + gains.ext_d * d_roll

    def fix(leg: LegTarget, ext_sign: float) -> LegTarget:
        return LegTarget(
            extension=min(1.0, max(0.0, leg.extension + ext_sign * ext)),
            leg_roll=leg.leg_roll - hip_roll,
            leg_pitch=leg.leg_pitch - hip_pitch,
            leg_yaw=leg.leg_yaw,
            foot_pitch=leg.foot_pitch + foot_pitch,
            foot_roll=leg.foot_roll + foot_roll,
        )

    corrected = AbstractPose(
        left=fix(pose.left, -1.0),
        right=fix(pose.right, +1.0),
        left_arm_pitch=pose.left_arm_pitch + u_pitch,
        right_arm_pitch=pose.right_arm_pitch + u_pitch,
        arm_roll_offset=pose.arm_roll_offset + u_roll,
    )
    return corrected, new_state


def abstract_to_joints(
    model: RobotModel,
    pose: AbstractPose,
    params: GaitParams = GaitParams(),
) -> tuple[np.ndarray, bool]:
    """Realize abstract targets on the serial chains via leg IK.

    Returns (q, saturated); saturation means an extension outside [0, 1], a
    foot target pushed back to the workspace boundary, or a joint clipped at
    its limit.
    """
    geo = model.leg_geometry
    q = np.zeros(model.serial_dof)
    saturated = False

    for side, leg in (("left", pose.left), ("right", pose.right)):
        eta = leg.extension
        if not 0.0 <= eta <= 1.0:
            eta = min(1.0, max(0.0, eta))
            saturated = True
        sign_y = 1.0 if side == "left" else -1.0
        hip = np.array([geo.hip_offset_x, sign_y * geo.hip_offset_y, 0.0])
        direction = rot_z(leg.leg_yaw) @ rot_x(leg.leg_roll) @ rot_y(leg.leg_pitch)
        foot_rot = rot_z(leg.leg_yaw) @ rot_x(leg.foot_roll) @ rot_y(leg.foot_pitch)
        reach = eta * geo.max_reach + geo.foot_offset_z
        target = hip + direction @ np.array([0.0, 0.0, -reach])
        quat = matrix_to_quat(foot_rot)
        try:
            res = leg_inverse_kinematics(model, side, target, quat)
        except OutOfWorkspaceError as err:
            saturated = True
            # Project the sole target back along the leg direction so the
            # hip-to-ankle distance sits exactly on the workspace boundary.
            down = direction @ np.array([0.0, 0.0, -1.0])
            ankle_lift = foot_rot @ np.array([0.0, 0.0, geo.foot_offset_z])
            b = float(down @ ankle_lift)
            c = float(ankle_lift @ ankle_lift)
            if err.reach > err.max_reach:
                boundary = err.max_reach - 1e-9
            else:
                boundary = err.min_reach + 1e-9
            disc = max(b * b - c + boundary * boundary, 0.0)
            r = max(-b + math.sqrt(disc), 0.0)
            target = hip + r * down
            res = leg_inverse_kinematics(model, side, target, quat)
        if res.limit_violations:
            saturated = True
        chain = model.chain_joints(side + "_leg")
        lo = np.array([j.lower for j in chain])
        hi = np.array([j.upper for j in chain])
        values = np.clip(res.q, lo, hi)
        for joint, value in zip(chain, values):
            q[model.joint_index[joint.name]] = value

    arm = {
        "l_shoulder_pitch": pose.left_arm_pitch,
        "r_shoulder_pitch": pose.right_arm_pitch,
        "l_shoulder_roll": params.arm_roll_base + pose.arm_roll_offset,
        "r_shoulder_roll": -params.arm_roll_base + pose.arm_roll_offset,
        "l_elbow_pitch": params.elbow_base,
        "r_elbow_pitch": params.elbow_base,
    }
    for name, value in arm.items():
        j = model.joint_index[name]
        joint = model.joints[j]
        clipped = min(joint.upper, max(joint.lower, value))
        if clipped != value:
            saturated = True
        q[j] = clipped
    return q, saturated
