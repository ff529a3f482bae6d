"""Robot model: file loading, validation, forward kinematics, analytic leg IK.

A model document is JSON with top-level keys ``links``, ``joints``,
``actuators``, ``coupling``, ``servo_spec`` and ``leg_geometry``. The link
graph is a tree rooted at ``trunk``; every joint is revolute and rotates one
link about a unit axis expressed in that link's origin frame:

    T_link(q) = T_parent * T_origin * R(axis, q_joint)

Links without a joint are rigidly mounted (e.g. the foot sole frames).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import matrix_to_quat, quat_to_matrix, rot_x, rot_y, rot_z

__all__ = [
    "ModelError",
    "OutOfWorkspaceError",
    "LinkSpec",
    "JointSpec",
    "CouplingRow",
    "ServoSpec",
    "LegGeometry",
    "RobotModel",
    "FKResult",
    "LegIKResult",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "default_model_path",
    "forward_kinematics",
    "leg_inverse_kinematics",
]

CHAIN_NAMES = ("neck", "left_arm", "right_arm", "left_leg", "right_leg")


class ModelError(ValueError):
    """Model document failed validation. Message names the offending field."""


class OutOfWorkspaceError(ValueError):
    """Leg IK target is outside the reachable workspace."""

    def __init__(self, reach: float, max_reach: float, min_reach: float):
        self.reach = reach
        self.max_reach = max_reach
        self.min_reach = min_reach
        super().__init__(
            f"target at {reach:.4f} m from hip, reachable band "
            f"[{min_reach:.4f}, {max_reach:.4f}] m"
        )


@dataclass
class LinkSpec:
    name: str
    parent: str | None
    origin_pos: np.ndarray
    origin_quat: np.ndarray
    mass: float
    com: np.ndarray
    inertia: np.ndarray  # 3x3 about the com, link frame


@dataclass
class JointSpec:
    name: str
    link: str
    axis: np.ndarray
    lower: float
    upper: float
    chain: str


@dataclass
class CouplingRow:
    actuator: str
    terms: tuple[tuple[str, int], ...]  # (serial joint name, sign in {-1, +1})
    gear: float
    offset: float


@dataclass
class ServoSpec:
    encoder_resolution: int = 4096
    stall_torque: float = 10.0
    no_load_speed_rpm: float = 55.0
    nominal_voltage: float = 14.8


@dataclass
class LegGeometry:
    thigh_length: float
    shank_length: float
    hip_offset_x: float
    hip_offset_y: float
    foot_offset_z: float

    @property
    def max_reach(self) -> float:
        return self.thigh_length + self.shank_length

    @property
    def full_length(self) -> float:
        """Hip-to-sole distance at full extension."""
        return self.thigh_length + self.shank_length + self.foot_offset_z


@dataclass
class RobotModel:
    name: str
    links: list[LinkSpec]
    joints: list[JointSpec]
    actuators: list[str]
    coupling: list[CouplingRow]
    servo_spec: ServoSpec
    leg_geometry: LegGeometry
    notes: list[str] = field(default_factory=list)

    # Derived lookups, filled by __post_init__.
    link_index: dict[str, int] = field(default_factory=dict, repr=False)
    joint_index: dict[str, int] = field(default_factory=dict, repr=False)
    joint_of_link: dict[str, str] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.link_index = {l.name: i for i, l in enumerate(self.links)}
        self.joint_index = {j.name: i for i, j in enumerate(self.joints)}
        self.joint_of_link = {j.link: j.name for j in self.joints}

    @property
    def serial_dof(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> list[str]:
        return [j.name for j in self.joints]

    def chain_joints(self, chain: str) -> list[JointSpec]:
        return [j for j in self.joints if j.chain == chain]

    def joint_limits(self) -> np.ndarray:
        return np.array([[j.lower, j.upper] for j in self.joints])

    def q_from_dict(self, values: dict[str, float], default: float = 0.0) -> np.ndarray:
        q = np.full(self.serial_dof, default)
        for name, val in values.items():
            if name not in self.joint_index:
                raise KeyError(f"unknown joint {name!r}")
            q[self.joint_index[name]] = float(val)
        return q

    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    def bus_id(self, actuator: str) -> int:
        """Wire id of an actuator (1-based position in the actuator table)."""
        return self.actuators.index(actuator) + 1


def _as_vec3(value, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ModelError(f"{where}: expected a 3-vector, got shape {arr.shape}")
    return arr


def _as_inertia(value, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3):
        raise ModelError(f"{where}: inertia must be a diagonal 3-vector or 3x3 matrix")
    if not np.allclose(arr, arr.T, atol=1e-9):
        raise ModelError(f"{where}: inertia is not symmetric")
    eigvals = np.linalg.eigvalsh(arr)
    if eigvals.min() < -1e-9:
        raise ModelError(f"{where}: inertia is not positive semidefinite")
    return arr


def _as_quat(value, where: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (4,):
        raise ModelError(f"{where}: expected a wxyz quaternion")
    n = np.linalg.norm(arr)
    if abs(n - 1.0) > 1e-6:
        raise ModelError(f"{where}: quaternion norm {n:.6f} is not 1")
    return arr / n


def model_from_dict(data: dict) -> RobotModel:
    """Build and validate a model from a parsed document."""
    for key in ("links", "joints", "actuators", "coupling", "servo_spec", "leg_geometry"):
        if key not in data:
            raise ModelError(f"missing top-level key {key!r}")

    links: list[LinkSpec] = []
    for i, raw in enumerate(data["links"]):
        where = f"links[{i}] ({raw.get('name', '?')})"
        try:
            origin = raw.get("origin", {})
            link = LinkSpec(
                name=raw["name"],
                parent=raw.get("parent"),
                origin_pos=_as_vec3(origin.get("xyz", [0, 0, 0]), where + ".origin.xyz"),
                origin_quat=_as_quat(origin.get("quat", [1, 0, 0, 0]), where + ".origin.quat"),
                mass=float(raw["mass"]),
                com=_as_vec3(raw["com"], where + ".com"),
                inertia=_as_inertia(raw["inertia"], where + ".inertia"),
            )
        except KeyError as exc:
            raise ModelError(f"{where}: missing field {exc}") from exc
        if link.mass <= 0.0:
            raise ModelError(f"{where}: mass must be > 0")
        links.append(link)

    names = [l.name for l in links]
    if len(set(names)) != len(names):
        raise ModelError("duplicate link names")

    roots = [l for l in links if l.parent is None]
    if len(roots) != 1 or roots[0].name != "trunk":
        raise ModelError("link graph must have exactly one root named 'trunk'")
    link_set = set(names)
    for l in links:
        if l.parent is not None and l.parent not in link_set:
            raise ModelError(f"link {l.name!r}: unknown parent {l.parent!r}")

    # Reject cycles and order parents before children.
    order: dict[str, int] = {"trunk": 0}
    pending = [l for l in links if l.parent is not None]
    while pending:
        progressed = [l for l in pending if l.parent in order]
        if not progressed:
            raise ModelError(f"link graph contains a cycle through {pending[0].name!r}")
        for l in progressed:
            order[l.name] = len(order)
        pending = [l for l in pending if l.name not in order]
    links.sort(key=lambda l: order[l.name])

    joints: list[JointSpec] = []
    seen_links: set[str] = set()
    for i, raw in enumerate(data["joints"]):
        where = f"joints[{i}] ({raw.get('name', '?')})"
        try:
            axis = _as_vec3(raw["axis"], where + ".axis")
            lo, hi = float(raw["limits"][0]), float(raw["limits"][1])
            joint = JointSpec(
                name=raw["name"],
                link=raw["link"],
                axis=axis,
                lower=lo,
                upper=hi,
                chain=raw["chain"],
            )
        except (KeyError, IndexError) as exc:
            raise ModelError(f"{where}: missing field {exc}") from exc
        n = np.linalg.norm(joint.axis)
        if abs(n - 1.0) > 1e-6:
            raise ModelError(f"{where}: axis norm {n:.6f} is not 1")
        joint.axis = joint.axis / n
        if not joint.lower < joint.upper:
            raise ModelError(f"{where}: limits must satisfy lower < upper")
        if joint.link not in link_set:
            raise ModelError(f"{where}: unknown link {joint.link!r}")
        if joint.link in seen_links:
            raise ModelError(f"{where}: link {joint.link!r} already has a joint")
        if joint.link == "trunk":
            raise ModelError(f"{where}: the root link cannot have a joint")
        if joint.chain not in CHAIN_NAMES:
            raise ModelError(f"{where}: unknown chain {joint.chain!r}")
        seen_links.add(joint.link)
        joints.append(joint)

    joint_names = [j.name for j in joints]
    if len(set(joint_names)) != len(joint_names):
        raise ModelError("duplicate joint names")

    actuators = list(data["actuators"])
    if len(set(actuators)) != len(actuators):
        raise ModelError("duplicate actuator names")

    joint_set = set(joint_names)
    rows: list[CouplingRow] = []
    covered: set[str] = set()
    for i, raw in enumerate(data["coupling"]):
        where = f"coupling[{i}] ({raw.get('actuator', '?')})"
        try:
            terms = tuple((str(j), int(s)) for j, s in raw["terms"])
            row = CouplingRow(
                actuator=raw["actuator"],
                terms=terms,
                gear=float(raw["gear"]),
                offset=float(raw.get("offset", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"{where}: bad row: {exc}") from exc
        if row.actuator not in actuators:
            raise ModelError(f"{where}: unknown actuator {row.actuator!r}")
        if row.actuator in covered:
            raise ModelError(f"{where}: duplicate row for actuator {row.actuator!r}")
        if not row.terms:
            raise ModelError(f"{where}: actuator row has no serial-joint terms")
        for jname, sign in row.terms:
            if jname not in joint_set:
                raise ModelError(f"{where}: unknown joint {jname!r}")
            if sign not in (-1, 1):
                raise ModelError(f"{where}: term sign must be -1 or +1, got {sign}")
        if len({j for j, _ in row.terms}) != len(row.terms):
            raise ModelError(f"{where}: duplicate joint in terms")
        if row.gear <= 0.0:
            raise ModelError(f"{where}: gear must be > 0")
        covered.add(row.actuator)
        rows.append(row)
    if covered != set(actuators):
        missing = sorted(set(actuators) - covered)
        raise ModelError(f"actuators without a coupling row: {missing}")

    spec_raw = data["servo_spec"]
    servo = ServoSpec(
        encoder_resolution=int(spec_raw["encoder_resolution"]),
        stall_torque=float(spec_raw["stall_torque"]),
        no_load_speed_rpm=float(spec_raw["no_load_speed_rpm"]),
        nominal_voltage=float(spec_raw["nominal_voltage"]),
    )
    if servo.encoder_resolution <= 0 or servo.stall_torque <= 0 or servo.nominal_voltage <= 0:
        raise ModelError("servo_spec values must be positive")

    geo_raw = data["leg_geometry"]
    try:
        geometry = LegGeometry(
            thigh_length=float(geo_raw["thigh_length"]),
            shank_length=float(geo_raw["shank_length"]),
            hip_offset_x=float(geo_raw["hip_offset_x"]),
            hip_offset_y=float(geo_raw["hip_offset_y"]),
            foot_offset_z=float(geo_raw["foot_offset_z"]),
        )
    except KeyError as exc:
        raise ModelError(f"leg_geometry: missing field {exc}") from exc
    if geometry.thigh_length <= 0 or geometry.shank_length <= 0 or geometry.foot_offset_z < 0:
        raise ModelError("leg_geometry lengths must be positive")

    return RobotModel(
        name=data.get("name", "unnamed"),
        links=links,
        joints=joints,
        actuators=actuators,
        coupling=rows,
        servo_spec=servo,
        leg_geometry=geometry,
        notes=list(data.get("notes", [])),
    )


def model_to_dict(model: RobotModel) -> dict:
    """Inverse of model_from_dict, suitable for canonical serialization."""
    return {
        "name": model.name,
        "notes": list(model.notes),
        "links": [
            {
                "name": l.name,
                "parent": l.parent,
                "origin": {"xyz": l.origin_pos.tolist(), "quat": l.origin_quat.tolist()},
                "mass": l.mass,
                "com": l.com.tolist(),
                "inertia": l.inertia.tolist(),
            }
            for l in model.links
        ],
        "joints": [
            {
                "name": j.name,
                "link": j.link,
                "axis": j.axis.tolist(),
                "limits": [j.lower, j.upper],
                "chain": j.chain,
            }
            for j in model.joints
        ],
        "actuators": list(model.actuators),
        "coupling": [
            {
                "actuator": r.actuator,
                "terms": [[j, s] for j, s in r.terms],
                "gear": r.gear,
                "offset": r.offset,
            }
            for r in model.coupling
        ],
        "servo_spec": {
            "encoder_resolution": model.servo_spec.encoder_resolution,
            "stall_torque": model.servo_spec.stall_torque,
            "no_load_speed_rpm": model.servo_spec.no_load_speed_rpm,
            "nominal_voltage": model.servo_spec.nominal_voltage,
        },
        "leg_geometry": {
            "thigh_length": model.leg_geometry.thigh_length,
            "shank_length": model.leg_geometry.shank_length,
            "hip_offset_x": model.leg_geometry.hip_offset_x,
            "hip_offset_y": model.leg_geometry.hip_offset_y,
            "foot_offset_z": model.leg_geometry.foot_offset_z,
        },
    }


def load_model(path: str | Path) -> RobotModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return model_from_dict(data)


def default_model_path() -> Path:
    return Path(str(resources.files("op2stack").joinpath("data/humanoid20.model")))


class FKResult:
    """Trunk-frame poses of every link for one joint configuration."""

    def __init__(self, model: RobotModel, pos: np.ndarray, rot: np.ndarray):
        self._model = model
        self.pos = pos  # (L, 3)
        self.rot = rot  # (L, 3, 3)

    def position(self, link: str) -> np.ndarray:
        return self.pos[self._model.link_index[link]]

    def rotation(self, link: str) -> np.ndarray:
        return self.rot[self._model.link_index[link]]

    def quat(self, link: str) -> np.ndarray:
        return matrix_to_quat(self.rotation(link))


def forward_kinematics(model: RobotModel, q: np.ndarray | dict[str, float]) -> FKResult:
    """Poses of all links in the trunk frame for joint vector q."""
    if isinstance(q, dict):
        q = model.q_from_dict(q)
    q = np.asarray(q, dtype=float)
    if q.shape != (model.serial_dof,):
        raise ValueError(f"expected q of shape ({model.serial_dof},), got {q.shape}")

    n = len(model.links)
    pos = np.zeros((n, 3))
    rot = np.zeros((n, 3, 3))
    for i, link in enumerate(model.links):
        local_rot = quat_to_matrix(link.origin_quat)
        jname = model.joint_of_link.get(link.name)
        if jname is not None:
            joint = model.joints[model.joint_index[jname]]
            local_rot = local_rot @ _axis_rotation(joint.axis, q[model.joint_index[jname]])
        if link.parent is None:
            pos[i] = link.origin_pos
            rot[i] = local_rot
        else:
            p = model.link_index[link.parent]
            pos[i] = pos[p] + rot[p] @ link.origin_pos
            rot[i] = rot[p] @ local_rot
    return FKResult(model, pos, rot)


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


@dataclass
class LegIKResult:
    q: np.ndarray  # chain order: hip yaw, hip roll, hip pitch, knee, ankle pitch, ankle roll
    limit_violations: list[str]


def leg_inverse_kinematics(
    model: RobotModel,
    side: str,
    target_pos: np.ndarray,
    target_quat: np.ndarray,
) -> LegIKResult:
    """Analytic 6-DOF leg IK for a sole pose given in the trunk frame.

    The knee solution takes the non-negative bend branch; a target at exactly
    full extension resolves to knee = 0. Joint-limit violations are reported,
    not raised; a target outside the distance workspace raises
    OutOfWorkspaceError.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    geo = model.leg_geometry
    t, s = geo.thigh_length, geo.shank_length
    sign_y = 1.0 if side == "left" else -1.0
    hip = np.array([geo.hip_offset_x, sign_y * geo.hip_offset_y, 0.0])

    target_pos = np.asarray(target_pos, dtype=float)
    r_target = quat_to_matrix(np.asarray(target_quat, dtype=float))
    ankle = target_pos + r_target @ np.array([0.0, 0.0, geo.foot_offset_z])

    # Hip seen from the ankle, expressed in the foot frame.
    r = r_target.T @ (hip - ankle)
    c = float(np.linalg.norm(r))
    max_reach = t + s
    min_reach = abs(t - s)
    if c > max_reach + 1e-9 or c < min_reach - 1e-9:
        raise OutOfWorkspaceError(reach=c, max_reach=max_reach, min_reach=min_reach)
    c = min(max(c, min_reach), max_reach)

    # Knee bend from the law of cosines (0 = straight).
    cos_interior = (t * t + s * s - c * c) / (2.0 * t * s)
    interior = math.acos(min(1.0, max(-1.0, cos_interior)))
    q_knee = math.pi - interior

    # Angle at the ankle corner of the hip-knee-ankle triangle.
    if c > 1e-12:
        cos_ankle = (s * s + c * c - t * t) / (2.0 * s * c)
        alpha = math.acos(min(1.0, max(-1.0, cos_ankle)))
    else:
        alpha = 0.0

    q_ankle_roll = math.atan2(r[1], r[2])
    q_ankle_pitch = -math.atan2(r[0], math.hypot(r[1], r[2])) - alpha

    # Remaining rotation belongs to the z-x-y hip stack.
    m = r_target @ rot_x(-q_ankle_roll) @ rot_y(-(q_ankle_pitch + q_knee))
    q_hip_roll = math.asin(min(1.0, max(-1.0, m[2, 1])))
    q_hip_yaw = math.atan2(-m[0, 1], m[1, 1])
    q_hip_pitch = math.atan2(-m[2, 0], m[2, 2])

    q = np.array([q_hip_yaw, q_hip_roll, q_hip_pitch, q_knee, q_ankle_pitch, q_ankle_roll])

    chain = "left_leg" if side == "left" else "right_leg"
    violations = [
        joint.name
        for joint, value in zip(model.chain_joints(chain), q)
        if not (joint.lower - 1e-9 <= value <= joint.upper + 1e-9)
    ]
    return LegIKResult(q=q, limit_violations=violations)
