"""Model-based feed-forward position control.

The servos run pure proportional control, so any held load parks the joint
short of its goal by load / (k_t * gain), scaled by how far the bus voltage
sits from nominal. Instead of raising gains (and noise), the controller
pre-biases each commanded position by the deflection it expects from the
trajectory's own dynamics: inverse-dynamics torques are mapped to actuator
space, converted to position offsets through the servo's steady-state law,
and added to the kinematic command before tick quantization.

Effort is the unitless [0, 1] knob trading tracking stiffness for
compliance; it interpolates the proportional gain between a floor and the
full-effort gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingMatrix
from .dynamics import GRAVITY, inverse_dynamics
from .model import RobotModel
from .servo_bus import rad_to_ticks

__all__ = ["FFParams", "ActuatorCommand", "effort_to_pgain", "feedforward_offset", "compose_command"]

V_BUS_MIN = 10.0
V_BUS_MAX = 17.0


@dataclass(frozen=True)
class FFParams:
    k_t: float = 4.48  # N*m per gain unit per rad of position error
    mu_c: float = 0.02  # N*m Coulomb friction
    mu_v: float = 0.05  # N*m*s/rad viscous friction
    v_nominal: float = 14.8  # V
    p_gain_at_effort_1: int = 64
    p_gain_floor: int = 2

    def __post_init__(self):
        if min(self.k_t, self.mu_c, self.mu_v, self.v_nominal) < 0:
            raise ValueError("FF constants must be non-negative")
        if not 0 < self.p_gain_floor <= self.p_gain_at_effort_1 <= 128:
            raise ValueError("require 0 < p_gain_floor <= p_gain_at_effort_1 <= 128")


@dataclass(frozen=True)
class ActuatorCommand:
    ticks: np.ndarray  # (n_act,) int goal positions
    gains: np.ndarray  # (n_act,) int proportional gains
    base_rad: np.ndarray  # kinematic actuator targets before compensation
    offset_rad: np.ndarray  # feed-forward deflection compensation


def effort_to_pgain(effort: float, params: FFParams = FFParams()) -> int:
    """Linear effort-to-gain interpolation; effort is clamped to [0, 1]."""
    effort = min(1.0, max(0.0, float(effort)))
    return int(round(params.p_gain_floor + effort * (params.p_gain_at_effort_1 - params.p_gain_floor)))


def _sign(x: float) -> float:
    return 0.0 if x == 0.0 else math.copysign(1.0, x)


def feedforward_offset(
    tau_des: float,
    qd_des: float,
    v_bus: float,
    gain: int,
    params: FFParams = FFParams(),
) -> float:
    """Position pre-bias that cancels the proportional droop for a load.

    Positive load torque produces a positive offset. Coulomb friction uses
    sign(qd) with sign(0) = 0, so a joint at rest is not dithered.
    """
    if gain < params.p_gain_floor:
        raise ValueError(f"gain {gain} below floor {params.p_gain_floor}")
    if not V_BUS_MIN <= v_bus <= V_BUS_MAX:
        raise ValueError(f"bus voltage {v_bus} outside [{V_BUS_MIN}, {V_BUS_MAX}] V")
    friction = params.mu_c * _sign(qd_des) + params.mu_v * qd_des
    return (tau_des + friction) * (params.v_nominal / v_bus) / (params.k_t * gain)


def compose_command(
    model: RobotModel,
    coupling: CouplingMatrix,
    q_des: np.ndarray,
    qd_des: np.ndarray,
    qdd_des: np.ndarray,
    efforts: np.ndarray | float,
    v_bus: float,
    params: FFParams = FFParams(),
    gravity: np.ndarray = GRAVITY,
) -> ActuatorCommand:
    """Full control pipeline for one tick: trajectory in, bus command out."""
    n_act = coupling.n_actuators
    q_des = np.asarray(q_des, dtype=float)
    qd_des = np.asarray(qd_des, dtype=float)
    qdd_des = np.asarray(qdd_des, dtype=float)
    efforts = np.broadcast_to(np.asarray(efforts, dtype=float), (coupling.n_joints,))

    tau_serial = inverse_dynamics(model, q_des, qd_des, qdd_des, gravity)
    tau_act = coupling.serial_torques_to_actuators(tau_serial)
    qd_act = coupling.scaled @ qd_des
    base = coupling.serial_to_actuators(q_des)

    involved = coupling.signs != 0.0
    gains = np.empty(n_act, dtype=int)
    offsets = np.empty(n_act)
    for i in range(n_act):
        # An actuator serving several joints runs at the stiffest request.
        effort_i = float(np.max(efforts[involved[i]]))
        gains[i] = effort_to_pgain(effort_i, params)
        offsets[i] = feedforward_offset(float(tau_act[i]), float(qd_act[i]), v_bus, int(gains[i]), params)

    resolution = model.servo_spec.encoder_resolution
    ticks = np.array([rad_to_ticks(base[i] + offsets[i], resolution) for i in range(n_act)], dtype=int)
    return ActuatorCommand(ticks=ticks, gains=gains, base_rad=base, offset_rad=offsets)
