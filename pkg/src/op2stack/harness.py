"""Scenario runner: closed-loop experiments against the emulated servo bus.

Two modes keep every experiment an honest desk-scale computation:

* ``fixed_base_dynamics``: the trunk is clamped and a stored motion drives
  the joints; servo loads come from the inverse dynamics of the measured
  pose. Used for tracking and compensation studies.
* ``kinematic_walk``: the gait generator drives the joints, the stance sole
  anchors the robot for odometry, stance-leg servo loads are the weight
  moments of everything the joint supports through the anchored foot, and
  the trunk attitude is a damped tilt pendulum that disturbance impulses
  and the balance feedback act on.

The loop is wire-level: commands go out as sync-write frames, feedback is
read back through the register protocol, measured joints are fused from
actuator space, and the orientation filter consumes synthetic IMU samples
derived from the true trunk attitude.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .coupling import CouplingMatrix
from .dynamics import gravity_torques
from .ff_control import FFParams, compose_command
from .gait import (
    FeedbackGains,
    FeedbackState,
    GaitCommand,
    GaitParams,
    GaitState,
    abstract_pose,
    abstract_to_joints,
    advance_phase,
    apply_feedback,
    leg_phase,
)
from .geometry import quat_conjugate, quat_multiply, quat_to_matrix, quat_to_rotvec
from .model import RobotModel, forward_kinematics
from .motion import load_motion, motions_dir, play
from .orientation import (
    FilterState,
    FusedAngles,
    ImuSample,
    filter_update,
    fused_to_quat,
    quat_to_fused,
)
from .servo_bus import (
    ADDR_GOAL_POSITION,
    ADDR_P_GAIN,
    ADDR_PRESENT_POSITION,
    ADDR_TORQUE_ENABLE,
    Bus,
    ServoDevice,
    encode_packet,
    parse_status,
    rad_to_ticks,
    read_packet,
    sync_write_packet,
    ticks_to_rad,
)

__all__ = [
    "ScenarioError",
    "Disturbance",
    "Scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "load_scenario",
    "scenarios_dir",
    "synthesize_imu",
    "TrackingLog",
    "run_scenario",
    "SUPERVISOR_STATES",
    "SUPERVISOR_EVENTS",
    "SupervisorState",
    "supervisor_event",
    "supervisor_tick",
    "effort_scale",
    "emergency_relax",
]

BUS_VOLTAGE = 14.8  # V, held constant for the emulated supply
GRAVITY_ACCEL = 9.81
MODES = ("fixed_base_dynamics", "kinematic_walk")
DISTURBANCE_AXES = ("pitch", "roll")

DEFAULT_IMU_BIAS = (0.005, -0.003, 0.002)  # rad/s
DEFAULT_IMU_NOISE = 0.004  # rad/s and m/s^2, one sigma

# Trunk-tilt pendulum: a single rotational DOF per axis. The stance foot
# and hip corrections from the gait feedback enter as an effective support
# angle, which is what closes the balance loop in kinematic_walk mode.
PENDULUM_LENGTH = 0.65  # m, effective CoM height
PENDULUM_DAMPING = 2.0  # 1/s

# Stabilizing defaults for walking: the proportional foot + hip corrections
# must together exceed the tilt for the pendulum loop to be restoring.
DEFAULT_FEEDBACK = FeedbackGains(
    arm_p=0.3, arm_d=0.02,
    hip_p=0.6, hip_d=0.04,
    foot_p=0.8, foot_d=0.06,
    ext_p=0.2, ext_d=0.0,
)


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


@dataclass(frozen=True)
class Disturbance:
    """Impulse torque on one trunk tilt axis over a short window."""

    time: float  # s, start of the impulse
    axis: str  # "pitch" | "roll"
    torque: float  # N*m applied to the trunk tilt pendulum
    duration: float = 0.05  # s

    def __post_init__(self):
        if self.axis not in DISTURBANCE_AXES:
            raise ScenarioError(f"disturbance axis must be one of {DISTURBANCE_AXES}, got {self.axis!r}")
        if not (math.isfinite(self.time) and self.time >= 0.0):
            raise ScenarioError("disturbance time must be finite and >= 0")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ScenarioError("disturbance duration must be finite and > 0")
        if not math.isfinite(self.torque):
            raise ScenarioError("disturbance torque must be finite")


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    duration: float
    control_rate: int = 100
    physics_rate: int = 1000
    gait: GaitCommand | None = None
    gait_params: GaitParams | None = None
    motion: str | None = None
    disturbances: tuple[Disturbance, ...] = ()
    ff_enabled: bool = True
    seed: int = 0
    imu_bias: tuple[float, float, float] = DEFAULT_IMU_BIAS
    imu_noise: float = DEFAULT_IMU_NOISE
    feedback: FeedbackGains = DEFAULT_FEEDBACK

    def __post_init__(self):
        if self.mode not in MODES:
            raise ScenarioError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise ScenarioError("duration must be finite and > 0")
        if self.control_rate < 1:
            raise ScenarioError("control_rate must be >= 1 Hz")
        if self.physics_rate < self.control_rate or self.physics_rate % self.control_rate:
            raise ScenarioError("physics_rate must be a multiple of control_rate")
        if self.mode == "kinematic_walk":
            if self.gait is None or self.motion is not None:
                raise ScenarioError("kinematic_walk requires a gait command and no motion")
        else:
            if self.motion is None or self.gait is not None:
                raise ScenarioError("fixed_base_dynamics requires a motion name and no gait command")
            if self.gait_params is not None:
                raise ScenarioError("gait_params only applies to kinematic_walk scenarios")
        if len(self.imu_bias) != 3 or not all(math.isfinite(b) for b in self.imu_bias):
            raise ScenarioError("imu_bias must be three finite values")
        if not (math.isfinite(self.imu_noise) and self.imu_noise >= 0.0):
            raise ScenarioError("imu_noise must be finite and >= 0")


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a scenario from its JSON form, with field diagnostics."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    try:
        name = doc["name"]
        mode = doc["mode"]
        duration = float(doc["duration"])
    except KeyError as missing:
        raise ScenarioError(f"scenario is missing required field {missing.args[0]!r}") from None

    gait = None
    if doc.get("gait") is not None:
        g = doc["gait"]
        try:
            gait = GaitCommand(
                vx=float(g.get("vx", 0.0)),
                vy=float(g.get("vy", 0.0)),
                omega=float(g.get("omega", 0.0)),
                walking=bool(g.get("walking", True)),
            )
        except (TypeError, AttributeError):
            raise ScenarioError("gait must be an object with vx/vy/omega numbers") from None

    gait_params = None
    if doc.get("gait_params") is not None:
        try:
            gait_params = GaitParams(**{k: float(v) for k, v in doc["gait_params"].items()})
        except (TypeError, ValueError, AttributeError) as err:
            raise ScenarioError(f"bad gait_params: {err}") from None

    disturbances = []
    for i, d in enumerate(doc.get("disturbances", [])):
        try:
            disturbances.append(
                Disturbance(
                    time=float(d["time"]),
                    axis=d["axis"],
                    torque=float(d["torque"]),
                    duration=float(d.get("duration", 0.05)),
                )
            )
        except KeyError as missing:
            raise ScenarioError(f"disturbances[{i}] is missing field {missing.args[0]!r}") from None

    feedback = DEFAULT_FEEDBACK
    if doc.get("feedback") is not None:
        try:
            feedback = FeedbackGains(**{k: float(v) for k, v in doc["feedback"].items()})
        except (TypeError, ValueError) as err:
            raise ScenarioError(f"bad feedback gains: {err}") from None

    try:
        return Scenario(
            name=name,
            mode=mode,
            duration=duration,
            control_rate=int(doc.get("control_rate", 100)),
            physics_rate=int(doc.get("physics_rate", 1000)),
            gait=gait,
            gait_params=gait_params,
            motion=doc.get("motion"),
            disturbances=tuple(disturbances),
            ff_enabled=bool(doc.get("ff_enabled", True)),
            seed=int(doc.get("seed", 0)),
            imu_bias=tuple(float(b) for b in doc.get("imu_bias", DEFAULT_IMU_BIAS)),
            imu_noise=float(doc.get("imu_noise", DEFAULT_IMU_NOISE)),
            feedback=feedback,
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ScenarioError):
            raise
        raise ScenarioError(str(err)) from None


def scenario_to_dict(scenario: Scenario) -> dict:
    doc: dict = {
        "name": scenario.name,
        "mode": scenario.mode,
        "duration": scenario.duration,
        "control_rate": scenario.control_rate,
        "physics_rate": scenario.physics_rate,
        "ff_enabled": scenario.ff_enabled,
        "seed": scenario.seed,
        "imu_bias": list(scenario.imu_bias),
        "imu_noise": scenario.imu_noise,
    }
    if scenario.gait is not None:
        doc["gait"] = {
            "vx": scenario.gait.vx,
            "vy": scenario.gait.vy,
            "omega": scenario.gait.omega,
            "walking": scenario.gait.walking,
        }
    if scenario.gait_params is not None:
        doc["gait_params"] = dataclasses.asdict(scenario.gait_params)
    if scenario.motion is not None:
        doc["motion"] = scenario.motion
    if scenario.disturbances:
        doc["disturbances"] = [
            {"time": d.time, "axis": d.axis, "torque": d.torque, "duration": d.duration}
            for d in scenario.disturbances
        ]
    fb = scenario.feedback
    doc["feedback"] = {
        "arm_p": fb.arm_p, "arm_d": fb.arm_d,
        "hip_p": fb.hip_p, "hip_d": fb.hip_d,
        "foot_p": fb.foot_p, "foot_d": fb.foot_d,
        "ext_p": fb.ext_p, "ext_d": fb.ext_d,
    }
    return doc


def scenarios_dir() -> Path:
    return Path(__file__).parent / "data" / "scenarios"


def load_scenario(spec: str | Path) -> Scenario:
    """Load a scenario from a JSON file path or a shipped scenario name."""
    path = Path(spec)
    if not path.exists():
        candidate = scenarios_dir() / f"{spec}.json"
        if candidate.exists():
            path = candidate
        else:
            raise ScenarioError(f"no scenario file or shipped scenario named {spec!r}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: {err}") from None
    return scenario_from_dict(doc)


def _imu_sample(
    q_prev: np.ndarray,
    q_next: np.ndarray,
    dt: float,
    bias: np.ndarray,
    sigma: float,
    rng: np.random.Generator,
) -> ImuSample:
    """One synthetic sample for the attitude step q_prev -> q_next."""
    delta = quat_multiply(quat_conjugate(q_prev), q_next)
    omega = quat_to_rotvec(delta) / dt  # mean body rate over the step
    gyro = omega + bias + rng.normal(0.0, sigma, 3)
    rot = quat_to_matrix(q_next)
    accel = rot.T @ np.array([0.0, 0.0, GRAVITY_ACCEL]) + rng.normal(0.0, sigma, 3)
    return ImuSample(gyro=gyro, accel=accel, dt=dt)


def synthesize_imu(
    quats: np.ndarray,
    bias,
    noise_sigma: float,
    dt: float,
    seed: int = 0,
) -> list[ImuSample]:
    """Turn a true attitude trajectory into gyro/accel samples.

    quats holds (n, 4) world-from-body unit quaternions spaced dt apart.
    Returns n-1 samples; sample k carries the mean body rate over the step
    from k to k+1 plus bias and Gaussian noise, and the gravity direction
    at k+1 plus noise. A fixed seed reproduces the stream exactly.
    """
    quats = np.asarray(quats, dtype=float)
    if quats.ndim != 2 or quats.shape[1] != 4 or quats.shape[0] < 2:
        raise ValueError("need an (n, 4) quaternion trajectory with n >= 2")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if noise_sigma < 0.0:
        raise ValueError("noise sigma must be >= 0")
    bias = np.asarray(bias, dtype=float).reshape(3)
    rng = np.random.default_rng(seed)
    return [
        _imu_sample(quats[k], quats[k + 1], dt, bias, noise_sigma, rng)
        for k in range(len(quats) - 1)
    ]


# --- supervisor ---------------------------------------------------------

SUPERVISOR_STATES = ("relaxed", "fading_in", "faded", "running", "fading_out")
SUPERVISOR_EVENTS = ("fade_in", "fade_out", "start_behavior", "stop_behavior", "emergency_relax")

_TRANSITIONS = {
    ("relaxed", "fade_in"): "fading_in",
    ("fading_in", "fade_out"): "fading_out",
    ("faded", "start_behavior"): "running",
    ("faded", "fade_out"): "fading_out",
    ("running", "stop_behavior"): "faded",
}


@dataclass(frozen=True)
class SupervisorState:
    mode: str = "relaxed"
    fade_elapsed: float = 0.0
    fade_duration: float = 1.0


def supervisor_event(state: SupervisorState, event: str, bus: Bus | None = None) -> SupervisorState:
    """Apply one operator event; illegal transitions return the state unchanged.

    emergency_relax is accepted from every state. When a bus is supplied it
    zeroes torque_enable on all attached devices in the same call, so the
    shafts go limp within the current control tick.
    """
    if event not in SUPERVISOR_EVENTS:
        raise ValueError(f"unknown supervisor event {event!r}")
    if event == "emergency_relax":
        if bus is not None:
            emergency_relax(bus)
        return replace(state, mode="relaxed", fade_elapsed=0.0)
    target = _TRANSITIONS.get((state.mode, event))
    if target is None:
        return state
    return replace(state, mode=target, fade_elapsed=0.0)


def supervisor_tick(state: SupervisorState, dt: float) -> SupervisorState:
    """Advance fade progress; fades complete into faded/relaxed."""
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    if state.mode not in ("fading_in", "fading_out"):
        return state
    elapsed = state.fade_elapsed + dt
    if elapsed >= state.fade_duration:
        done = "faded" if state.mode == "fading_in" else "relaxed"
        return replace(state, mode=done, fade_elapsed=0.0)
    return replace(state, fade_elapsed=elapsed)


def effort_scale(state: SupervisorState) -> float:
    """Servo effort multiplier for the current state.

    Matches the linear profile of motion.fade: 0 when relaxed, ramping
    during fades, 1 once faded or running.
    """
    if state.mode == "relaxed":
        return 0.0
    if state.mode == "fading_in":
        return min(1.0, state.fade_elapsed / state.fade_duration)
    if state.mode == "fading_out":
        return max(0.0, 1.0 - state.fade_elapsed / state.fade_duration)
    return 1.0


def emergency_relax(bus: Bus) -> None:
    """Zero torque_enable on every attached device with one broadcast."""
    rows = {device_id: b"\x00" for device_id in bus.devices}
    if rows:
        bus.handle(encode_packet(sync_write_packet(ADDR_TORQUE_ENABLE, 1, rows)))


# --- scenario execution -------------------------------------------------


@dataclass
class TrackingLog:
    """Per-control-tick record of one scenario run."""

    actuator_names: list[str]
    joint_names: list[str]
    times: np.ndarray  # (n,) s, end of each control tick
    commanded_ticks: np.ndarray  # (n, n_act) goal position registers
    measured_ticks: np.ndarray  # (n, n_act) present position readback
    joint_errors: np.ndarray  # (n, n_dof) rad, desired minus measured
    fused: np.ndarray  # (n, 3) estimated fused yaw/pitch/roll
    hemisphere: np.ndarray  # (n,)
    bus_voltage: np.ndarray  # (n,)

    def to_csv(self) -> str:
        """One row per control tick; all floats printed with %.10g."""
        out = io.StringIO()
        cols = ["tick", "time"]
        cols += [f"cmd_{a}" for a in self.actuator_names]
        cols += [f"pos_{a}" for a in self.actuator_names]
        cols += [f"err_{j}" for j in self.joint_names]
        cols += ["fused_yaw", "fused_pitch", "fused_roll", "hemisphere", "bus_voltage"]
        out.write(",".join(cols) + "\n")
        for k in range(len(self.times)):
            row = [str(k), "%.10g" % self.times[k]]
            row += [str(int(v)) for v in self.commanded_ticks[k]]
            row += [str(int(v)) for v in self.measured_ticks[k]]
            row += ["%.10g" % v for v in self.joint_errors[k]]
            row += ["%.10g" % v for v in self.fused[k]]
            row.append(str(int(self.hemisphere[k])))
            row.append("%.10g" % self.bus_voltage[k])
            out.write(",".join(row) + "\n")
        return out.getvalue()


class _MotionSource:
    """Fixed-base target stream from a stored motion; holds the last frame."""

    def __init__(self, model: RobotModel, name: str, dt: float):
        path = Path(name)
        if not path.exists():
            path = motions_dir() / f"{name}.motion"
            if not path.exists():
                raise ScenarioError(f"no motion file or shipped motion named {name!r}")
        self.motion = load_motion(path)
        if set(self.motion.joints) != set(model.joint_names):
            raise ScenarioError("scenario motions must command every joint")
        self.model = model
        self._errors: deque[tuple[float, float]] = deque()
        self._gen = play(self.motion, dt, self._error_stream())
        self._hold: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
        self.stance = "left"
        self.correction = {"pitch": 0.0, "roll": 0.0}

    def _error_stream(self):
        while True:
            yield self._errors.popleft() if self._errors else (0.0, 0.0)

    def initial_pose(self) -> np.ndarray:
        first = self.motion.keyframes[0]
        return self.model.q_from_dict(first.positions)

    def tick(self, est: FusedAngles, dt: float):
        self._errors.append((est.fused_pitch, est.fused_roll))
        sample = next(self._gen, None)
        if sample is None:
            q, _, eff = self._hold
            return q, np.zeros_like(q), eff
        q = self.model.q_from_dict(sample.positions)
        qd = self.model.q_from_dict(sample.velocities)
        eff = np.array([sample.efforts[j] for j in self.model.joint_names])
        self._hold = (q, qd, eff)
        return q, qd, eff


class _GaitSource:
    """Walking target stream: open-loop pattern plus attitude feedback."""

    def __init__(self, model: RobotModel, cmd: GaitCommand, gains: FeedbackGains,
                 params: GaitParams):
        self.model = model
        self.cmd = cmd
        self.gains = gains
        self.params = params
        self.state = GaitState(phase=-math.pi, params=self.params)
        self.fb_state = FeedbackState()
        self.ref = FusedAngles(0.0, 0.0, 0.0)
        self.q_prev: np.ndarray | None = None
        self.stance = self._touchdown_leader()
        self.correction = {"pitch": 0.0, "roll": 0.0}
        # Stiff legs, compliant feet: the ankles are run soft so the sole
        # can conform to the ground instead of fighting it.
        self.efforts = np.array([
            0.2 if name.endswith(("ankle_pitch", "ankle_roll")) else 1.0
            for name in model.joint_names
        ])

    def _touchdown_leader(self) -> str:
        """The leg that most recently landed: weight transfers onto it."""
        half_gap = self.params.double_support_fraction * math.pi / 2.0
        touchdown = math.pi - half_gap
        elapsed = {
            side: (leg_phase(self.state.phase, side) - touchdown) % (2.0 * math.pi)
            for side in ("left", "right")
        }
        return min(elapsed, key=elapsed.get)

    def initial_pose(self) -> np.ndarray:
        q, _ = abstract_to_joints(self.model, abstract_pose(self.state, self.cmd), self.params)
        return q

    def tick(self, est: FusedAngles, dt: float):
        raw = abstract_pose(self.state, self.cmd)
        pose, self.fb_state = apply_feedback(raw, est, self.ref, self.gains, self.fb_state, dt)
        q, _ = abstract_to_joints(self.model, pose, self.params)
        qd = np.zeros_like(q) if self.q_prev is None else (q - self.q_prev) / dt
        self.q_prev = q

        self.stance = self._touchdown_leader()
        raw_leg = raw.left if self.stance == "left" else raw.right
        fb_leg = pose.left if self.stance == "left" else pose.right
        self.correction = {
            "pitch": (fb_leg.foot_pitch - raw_leg.foot_pitch) - (fb_leg.leg_pitch - raw_leg.leg_pitch),
            "roll": (fb_leg.foot_roll - raw_leg.foot_roll) - (fb_leg.leg_roll - raw_leg.leg_roll),
        }

        self.state = advance_phase(self.state, dt)
        return q, qd, self.efforts


def _descendant_mask(model: RobotModel, root_link: str) -> np.ndarray:
    """Boolean mask over links: root_link and everything below it."""
    children: dict[str, list[str]] = {}
    for link in model.links:
        if link.parent is not None:
            children.setdefault(link.parent, []).append(link.name)
    mask = np.zeros(len(model.links), dtype=bool)
    stack = [root_link]
    while stack:
        name = stack.pop()
        mask[model.link_index[name]] = True
        stack.extend(children.get(name, []))
    return mask


def _stance_supported_masks(model: RobotModel, side: str) -> list[tuple[int, str, np.ndarray, np.ndarray]]:
    """Per stance-leg joint: (joint index, child link, local axis, supported-links mask).

    Supported = every link the joint holds up when the sole is anchored,
    i.e. the complement of the joint's own chain toward the foot.
    """
    rows = []
    for joint in model.chain_joints(f"{side}_leg"):
        mask = ~_descendant_mask(model, joint.link)
        rows.append((model.joint_index[joint.name], joint.link, np.asarray(joint.axis, dtype=float), mask))
    return rows


def _stance_torques(
    model: RobotModel,
    fk,
    rows,
    g_trunk: np.ndarray,
    masses: np.ndarray,
    coms_local: np.ndarray,
    alpha: np.ndarray | None = None,
    anchor: np.ndarray | None = None,
) -> dict[int, float]:
    """Holding torque per stance-leg joint with the sole anchored.

    Each joint carries the weight moment of everything it supports,
    tau = axis . sum_i (com_i - p_joint) x m_i (g - acc_i), in trunk
    coordinates. When the trunk tilt accelerates at alpha about the anchor
    point, acc_i = alpha x (com_i - anchor) adds the inertial reaction that
    loads joints quadratically in their distance below the mass. That term
    is what makes the lowest joints the hardest-working ones.
    """
    coms = fk.pos + np.einsum("lij,lj->li", fk.rot, coms_local)
    accel = np.broadcast_to(g_trunk, coms.shape).copy()
    if alpha is not None:
        accel = accel - np.cross(alpha, coms - anchor)
    forces = masses[:, None] * accel
    out = {}
    for joint_idx, link, axis_local, mask in rows:
        li = model.link_index[link]
        p = fk.pos[li]
        axis = fk.rot[li] @ axis_local
        moments = np.cross(coms[mask] - p, forces[mask])
        out[joint_idx] = float(axis @ moments.sum(axis=0))
    return out


def _read_positions(bus: Bus, device_ids: list[int], resolution: int) -> np.ndarray:
    """Poll present position on every device through the wire protocol."""
    angles = np.empty(len(device_ids))
    for i, device_id in enumerate(device_ids):
        frame = bus.handle(encode_packet(read_packet(device_id, ADDR_PRESENT_POSITION, 2)))
        status, _ = parse_status(frame)
        angles[i] = ticks_to_rad(status.params[0] | (status.params[1] << 8), resolution)
    return angles


@dataclass(frozen=True)
class TickRecord:
    """Everything observable about one control tick."""

    tick: int
    time: float
    commanded_ticks: np.ndarray
    measured_ticks: np.ndarray
    measured_q: np.ndarray
    joint_errors: np.ndarray
    fused: tuple[float, float, float]
    hemisphere: int
    trunk_xy: tuple[float, float]


def iter_scenario(model: RobotModel, scenario: Scenario):
    """Run one scenario, yielding a TickRecord per control tick.

    This is the single execution path: run_scenario packs the records into
    a log, and the streaming service forwards them as they are produced.
    """
    coupling = CouplingMatrix.from_model(model)
    n_act = coupling.n_actuators
    n_dof = coupling.n_joints
    resolution = model.servo_spec.encoder_resolution

    dt_c = 1.0 / scenario.control_rate
    substeps = scenario.physics_rate // scenario.control_rate
    dt_p = dt_c / substeps
    n_ticks = max(1, round(scenario.duration * scenario.control_rate))
    rng = np.random.default_rng(scenario.seed)
    bias = np.asarray(scenario.imu_bias, dtype=float)
    walking = scenario.mode == "kinematic_walk"

    if walking:
        source = _GaitSource(model, scenario.gait, scenario.feedback,
                             scenario.gait_params or GaitParams())
    else:
        source = _MotionSource(model, scenario.motion, dt_c)

    q0 = source.initial_pose()
    device_ids = [model.bus_id(a) for a in model.actuators]
    devices = [ServoDevice(device_id, model.servo_spec) for device_id in device_ids]
    bus = Bus(devices)
    act0 = coupling.serial_to_actuators(q0)
    for dev, angle in zip(devices, act0):
        dev.set_angle(angle)
    bus.handle(encode_packet(sync_write_packet(
        ADDR_TORQUE_ENABLE, 1, {device_id: b"\x01" for device_id in device_ids})))

    filter_state = FilterState()
    q_true = np.array([1.0, 0.0, 0.0, 0.0])
    q_meas = q0.copy()

    # Pendulum tilt state per axis and planar odometry via the anchored sole.
    tilt = {"pitch": [0.0, 0.0], "roll": [0.0, 0.0]}  # [angle, rate]
    heading = 0.0
    trunk_world = np.zeros(3)
    stance_rows = {side: _stance_supported_masks(model, side) for side in ("left", "right")}
    masses = np.array([l.mass for l in model.links])
    coms_local = np.array([l.com for l in model.links])
    total_mass = model.total_mass()
    anchor_side = source.stance
    if walking:
        fk0 = forward_kinematics(model, q_meas)
        anchor_world = trunk_world + fk0.position(f"{anchor_side[0]}_sole")

    ff_params = FFParams()
    for k in range(n_ticks):
        t = k * dt_c
        est = quat_to_fused(filter_state.q_est)
        q_des, qd_des, efforts = source.tick(est, dt_c)

        command = compose_command(model, coupling, q_des, qd_des, np.zeros(n_dof),
                                  efforts, BUS_VOLTAGE, ff_params)
        if scenario.ff_enabled:
            goal_ticks = command.ticks
        else:
            goal_ticks = np.array(
                [rad_to_ticks(command.base_rad[i], resolution) for i in range(n_act)], dtype=int)

        goal_rows = {device_ids[i]: bytes([int(goal_ticks[i]) & 0xFF, (int(goal_ticks[i]) >> 8) & 0xFF])
                     for i in range(n_act)}
        bus.handle(encode_packet(sync_write_packet(ADDR_GOAL_POSITION, 2, goal_rows)))
        gain_rows = {device_ids[i]: bytes([int(command.gains[i])]) for i in range(n_act)}
        bus.handle(encode_packet(sync_write_packet(ADDR_P_GAIN, 1, gain_rows)))

        # Servo loads at the measured pose, refreshed once per control tick.
        tau_serial = gravity_torques(model, q_meas)
        if walking:
            # Trunk tilt pendulum per axis. The stance sole offset from the
            # CoM line is the destabilizing support term (it alternates sign
            # every step, which is what rocks the trunk), the stance foot
            # and hip corrections are the restoring one, and disturbances
            # enter as torque impulses.
            fk_prev = forward_kinematics(model, q_meas)
            sole = fk_prev.position(f"{source.stance[0]}_sole")
            support = {"roll": sole[1] / PENDULUM_LENGTH, "pitch": -sole[0] / PENDULUM_LENGTH}
            dist = {"pitch": 0.0, "roll": 0.0}
            for d in scenario.disturbances:
                if d.time <= t < d.time + d.duration:
                    dist[d.axis] += d.torque
            alpha_axis = {}
            for axis in ("pitch", "roll"):
                angle, rate = tilt[axis]
                acc = (GRAVITY_ACCEL / PENDULUM_LENGTH) * (
                    math.sin(angle) + support[axis] * math.cos(angle) - source.correction[axis])
                acc -= PENDULUM_DAMPING * rate
                acc += dist[axis] / (total_mass * PENDULUM_LENGTH ** 2)
                rate += acc * dt_c
                angle += rate * dt_c
                tilt[axis] = [angle, rate]
                alpha_axis[axis] = acc
            heading += scenario.gait.omega * dt_c
            q_true_next = fused_to_quat(
                FusedAngles(heading, tilt["pitch"][0], tilt["roll"][0], 1))

            rot_world = quat_to_matrix(q_true_next)
            g_trunk = rot_world.T @ np.array([0.0, 0.0, -GRAVITY_ACCEL])
            alpha = np.array([alpha_axis["roll"], alpha_axis["pitch"], 0.0])
            for joint_idx, tau in _stance_torques(
                    model, fk_prev, stance_rows[source.stance], g_trunk,
                    masses, coms_local, alpha, sole).items():
                tau_serial[joint_idx] = tau
        else:
            q_true_next = q_true
        loads = coupling.serial_torques_to_actuators(tau_serial)

        for _ in range(substeps):
            for i, dev in enumerate(devices):
                dev.step(float(loads[i]), dt_p, BUS_VOLTAGE)

        act_meas = _read_positions(bus, device_ids, resolution)
        q_meas, _ = coupling.actuators_to_serial(act_meas)

        if walking:
            rot_world = quat_to_matrix(q_true_next)
            fk_now = forward_kinematics(model, q_meas)
            if source.stance != anchor_side:
                anchor_side = source.stance
                anchor_world = trunk_world + rot_world @ fk_now.position(f"{anchor_side[0]}_sole")
            trunk_world = anchor_world - rot_world @ fk_now.position(f"{anchor_side[0]}_sole")

        sample = _imu_sample(q_true, q_true_next, dt_c, bias, scenario.imu_noise, rng)
        filter_state = filter_update(filter_state, sample)
        q_true = q_true_next

        est_logged = quat_to_fused(filter_state.q_est)
        yield TickRecord(
            tick=k,
            time=(k + 1) * dt_c,
            commanded_ticks=np.asarray(goal_ticks, dtype=np.int64),
            measured_ticks=np.array([rad_to_ticks(a, resolution) for a in act_meas],
                                    dtype=np.int64),
            measured_q=q_meas.copy(),
            joint_errors=q_des - q_meas,
            fused=(est_logged.fused_yaw, est_logged.fused_pitch, est_logged.fused_roll),
            hemisphere=est_logged.hemisphere,
            trunk_xy=(float(trunk_world[0]), float(trunk_world[1])),
        )


def run_scenario(model: RobotModel, scenario: Scenario) -> tuple[TrackingLog, dict]:
    """Execute one scenario and return its log and summary metrics."""
    records = list(iter_scenario(model, scenario))
    n_ticks = len(records)
    err_log = np.stack([r.joint_errors for r in records])

    log = TrackingLog(
        actuator_names=list(model.actuators),
        joint_names=list(model.joint_names),
        times=np.array([r.time for r in records]),
        commanded_ticks=np.stack([r.commanded_ticks for r in records]),
        measured_ticks=np.stack([r.measured_ticks for r in records]),
        joint_errors=err_log,
        fused=np.array([r.fused for r in records]),
        hemisphere=np.array([r.hemisphere for r in records], dtype=np.int64),
        bus_voltage=np.full(n_ticks, BUS_VOLTAGE),
    )

    speed = 0.0
    if scenario.mode == "kinematic_walk":
        end_x, end_y = records[-1].trunk_xy
        speed = float(np.hypot(end_x, end_y) / (n_ticks / scenario.control_rate))
    per_joint = {
        name: {
            "max_error": float(np.max(np.abs(err_log[:, d]))),
            "rms_error": float(np.sqrt(np.mean(err_log[:, d] ** 2))),
        }
        for d, name in enumerate(model.joint_names)
    }
    worst = max(per_joint, key=lambda name: per_joint[name]["max_error"])
    metrics = {
        "scenario": scenario.name,
        "mode": scenario.mode,
        "ticks": n_ticks,
        "duration": scenario.duration,
        "mean_forward_speed": speed,
        "per_joint": per_joint,
        "max_error_joint": worst,
    }
    return log, metrics
