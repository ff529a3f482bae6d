"""Fixed-base rigid-body dynamics on the model's link tree.

Inverse dynamics is a recursive Newton-Euler pass in link coordinates with
gravity folded in as a trunk-frame base acceleration. The mass matrix is
assembled column by column from unit-acceleration inverse dynamics calls
(gravity and velocities zeroed), and forward dynamics solves

    M(q) qdd = tau - bias(q, qd)

All joint vectors follow the model's canonical joint order; gravity is a
3-vector expressed in the trunk frame (default Earth gravity, trunk level).
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import quat_to_matrix
from .model import RobotModel, forward_kinematics

__all__ = [
    "DynamicsError",
    "GRAVITY",
    "inverse_dynamics",
    "gravity_torques",
    "bias_torques",
    "mass_matrix",
    "forward_dynamics",
    "potential_energy",
    "kinetic_energy",
]

GRAVITY = np.array([0.0, 0.0, -9.81])


class DynamicsError(RuntimeError):
    """Dynamics computation failed (e.g. singular mass matrix)."""


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross has high call overhead for single 3-vectors; this is the
    # innermost loop of every dynamics call.
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


class _LinkTable:
    """Per-model arrays extracted once so the recursions stay allocation-light."""

    def __init__(self, model: RobotModel):
        n = len(model.links)
        self.parent = np.full(n, -1, dtype=int)
        self.origin_pos = np.zeros((n, 3))
        self.origin_rot = np.zeros((n, 3, 3))
        self.axis = np.zeros((n, 3))
        self.joint = np.full(n, -1, dtype=int)
        self.mass = np.zeros(n)
        self.com = np.zeros((n, 3))
        self.inertia = np.zeros((n, 3, 3))
        for i, link in enumerate(model.links):
            if link.parent is not None:
                self.parent[i] = model.link_index[link.parent]
            self.origin_pos[i] = link.origin_pos
            self.origin_rot[i] = quat_to_matrix(link.origin_quat)
            self.mass[i] = link.mass
            self.com[i] = link.com
            self.inertia[i] = link.inertia
            jname = model.joint_of_link.get(link.name)
            if jname is not None:
                j = model.joint_index[jname]
                self.joint[i] = j
                self.axis[i] = model.joints[j].axis


def _link_table(model: RobotModel) -> _LinkTable:
    table = getattr(model, "_dyn_cache", None)
    if table is None:
        table = _LinkTable(model)
        setattr(model, "_dyn_cache", table)
    return table


def _check_state(model: RobotModel, *vectors: np.ndarray) -> list[np.ndarray]:
    out = []
    for v in vectors:
        v = np.asarray(v, dtype=float)
        if v.shape != (model.serial_dof,):
            raise ValueError(f"expected shape ({model.serial_dof},), got {v.shape}")
        out.append(v)
    return out


def inverse_dynamics(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    qdd: np.ndarray,
    gravity: np.ndarray = GRAVITY,
) -> np.ndarray:
    """Joint torques that realize (q, qd, qdd) under the given gravity."""
    q, qd, qdd = _check_state(model, q, qd, qdd)
    gravity = np.asarray(gravity, dtype=float)
    t = _link_table(model)

    n = len(model.links)
    # Per-link kinematic quantities, each expressed in that link's frame.
    omega = np.zeros((n, 3))
    alpha = np.zeros((n, 3))
    acc = np.zeros((n, 3))  # linear acceleration of the link origin
    to_parent = np.empty((n, 3, 3))  # R such that v_parent = R @ v_link

    f = np.zeros((n, 3))
    nq = np.zeros((n, 3))

    for i in range(n):
        j = t.joint[i]
        if j < 0:
            to_parent[i] = t.origin_rot[i]
        else:
            to_parent[i] = t.origin_rot[i] @ _axis_rotation(t.axis[i], q[j])
        e = to_parent[i].T  # parent -> link
        p = t.parent[i]
        if p < 0:
            acc[i] = e @ (-gravity)  # d'Alembert: accelerate the base against gravity
        else:
            o = t.origin_pos[i]
            omega[i] = e @ omega[p]
            alpha[i] = e @ alpha[p]
            acc[i] = e @ (acc[p] + _cross(alpha[p], o) + _cross(omega[p], _cross(omega[p], o)))
        if j >= 0:
            a = t.axis[i]
            alpha[i] += a * qdd[j] + _cross(omega[i], a * qd[j])
            omega[i] += a * qd[j]

        c = t.com[i]
        acc_com = acc[i] + _cross(alpha[i], c) + _cross(omega[i], _cross(omega[i], c))
        force = t.mass[i] * acc_com
        f[i] = force
        inertia_w = t.inertia[i] @ omega[i]
        nq[i] = t.inertia[i] @ alpha[i] + _cross(omega[i], inertia_w) + _cross(c, force)

    # Backward pass: accumulate wrenches from children (topology order reversed).
    tau = np.zeros(model.serial_dof)
    for i in range(n - 1, -1, -1):
        j = t.joint[i]
        if j >= 0:
            tau[j] = float(t.axis[i] @ nq[i])
        p = t.parent[i]
        if p >= 0:
            f_in_parent = to_parent[i] @ f[i]
            f[p] += f_in_parent
            nq[p] += to_parent[i] @ nq[i] + _cross(t.origin_pos[i], f_in_parent)
    return tau


def gravity_torques(model: RobotModel, q: np.ndarray, gravity: np.ndarray = GRAVITY) -> np.ndarray:
    """Static holding torques: inverse dynamics at zero velocity/acceleration."""
    zero = np.zeros(model.serial_dof)
    return inverse_dynamics(model, q, zero, zero, gravity)


def bias_torques(model: RobotModel, q: np.ndarray, qd: np.ndarray, gravity: np.ndarray = GRAVITY) -> np.ndarray:
    """Coriolis, centrifugal, and gravity torques (zero acceleration)."""
    zero = np.zeros(model.serial_dof)
    return inverse_dynamics(model, q, qd, zero, gravity)


def mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia matrix built from unit-acceleration ID columns."""
    (q,) = _check_state(model, q)
    dof = model.serial_dof
    zero = np.zeros(dof)
    no_gravity = np.zeros(3)
    m = np.empty((dof, dof))
    for j in range(dof):
        unit = np.zeros(dof)
        unit[j] = 1.0
        m[:, j] = inverse_dynamics(model, q, zero, unit, no_gravity)
    return m


def forward_dynamics(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    tau: np.ndarray,
    gravity: np.ndarray = GRAVITY,
) -> np.ndarray:
    """Joint accelerations for applied torques tau."""
    q, qd, tau = _check_state(model, q, qd, tau)
    m = mass_matrix(model, q)
    rhs = tau - bias_torques(model, q, qd, gravity)
    try:
        qdd = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise DynamicsError("singular mass matrix") from exc
    if not np.all(np.isfinite(qdd)):
        raise DynamicsError("mass matrix solve produced non-finite accelerations")
    return qdd


def potential_energy(model: RobotModel, q: np.ndarray, gravity: np.ndarray = GRAVITY) -> float:
    """Gravitational potential, zero reference at the trunk origin."""
    (q,) = _check_state(model, q)
    gravity = np.asarray(gravity, dtype=float)
    fk = forward_kinematics(model, q)
    v = 0.0
    for i, link in enumerate(model.links):
        com = fk.pos[i] + fk.rot[i] @ link.com
        v -= link.mass * float(gravity @ com)
    return v


def kinetic_energy(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> float:
    """Total kinetic energy from per-link twists (independent of mass_matrix)."""
    q, qd = _check_state(model, q, qd)
    t = _link_table(model)

    n = len(model.links)
    omega = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    energy = 0.0
    for i in range(n):
        j = t.joint[i]
        rot = t.origin_rot[i] if j < 0 else t.origin_rot[i] @ _axis_rotation(t.axis[i], q[j])
        e = rot.T
        p = t.parent[i]
        if p >= 0:
            omega[i] = e @ omega[p]
            vel[i] = e @ (vel[p] + _cross(omega[p], t.origin_pos[i]))
        if j >= 0:
            omega[i] += t.axis[i] * qd[j]
        v_com = vel[i] + _cross(omega[i], t.com[i])
        energy += 0.5 * t.mass[i] * float(v_com @ v_com)
        energy += 0.5 * float(omega[i] @ (t.inertia[i] @ omega[i]))
    return energy
