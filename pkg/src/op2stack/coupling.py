"""Bidirectional mapping between serial joint space and actuator space.

The robot's 20 virtual serial joints are driven by 34 real actuators through
master/slave pairs, sign flips, external gearing, and a parallel linkage that
ties several actuators to sums of serial joints. All of that reduces to a
signed incidence matrix A (entries in {-1, 0, +1}) scaled per actuator row by
a gear ratio, plus a per-actuator offset:

    q_act  = G A q_serial + offset
    q_serial = argmin || G A q + offset - q_act ||      (feedback fusion)
    tau_serial = (G A)^T tau_act                        (virtual work)
    tau_act  = G A ((G A)^T G A)^-1 tau_serial          (minimum-norm split)

Redundant actuators (master/slave pairs, the parallel thigh/shank rows) make
the feedback direction overdetermined; the least-squares residual doubles as
a desynchronization diagnostic for exactly those groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import RobotModel

__all__ = ["CouplingError", "CouplingMatrix"]


class CouplingError(ValueError):
    """The coupling table cannot drive every serial joint."""


@dataclass
class CouplingMatrix:
    joint_names: list[str]
    actuator_names: list[str]
    signs: np.ndarray  # (n_act, n_joint) entries in {-1, 0, +1}
    gears: np.ndarray  # (n_act,) > 0
    offsets: np.ndarray  # (n_act,) rad

    scaled: np.ndarray = field(init=False, repr=False)  # G A
    _pinv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.signs = np.asarray(self.signs, dtype=float)
        self.gears = np.asarray(self.gears, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        n_act, n_joint = self.signs.shape
        if self.gears.shape != (n_act,) or self.offsets.shape != (n_act,):
            raise CouplingError("gears/offsets length must match actuator count")
        if np.any(self.gears <= 0.0):
            raise CouplingError("gear ratios must be positive")
        if not np.all(np.isin(self.signs, (-1.0, 0.0, 1.0))):
            raise CouplingError("sign matrix entries must be -1, 0, or +1")
        if np.any(np.all(self.signs == 0.0, axis=1)):
            idle = [self.actuator_names[i] for i in np.flatnonzero(np.all(self.signs == 0.0, axis=1))]
            raise CouplingError(f"actuator rows with no serial joint: {idle}")
        self.scaled = self.gears[:, None] * self.signs
        if np.linalg.matrix_rank(self.scaled) < n_joint:
            raise CouplingError("coupling matrix does not span all serial joints (rank deficient)")
        self._pinv = np.linalg.pinv(self.scaled)

    @classmethod
    def from_model(cls, model: RobotModel) -> "CouplingMatrix":
        n_act = len(model.actuators)
        n_joint = model.serial_dof
        signs = np.zeros((n_act, n_joint))
        gears = np.ones(n_act)
        offsets = np.zeros(n_act)
        act_index = {name: i for i, name in enumerate(model.actuators)}
        for row in model.coupling:
            i = act_index[row.actuator]
            gears[i] = row.gear
            offsets[i] = row.offset
            for joint, sign in row.terms:
                signs[i, model.joint_index[joint]] = float(sign)
        return cls(
            joint_names=list(model.joint_names),
            actuator_names=list(model.actuators),
            signs=signs,
            gears=gears,
            offsets=offsets,
        )

    @property
    def n_actuators(self) -> int:
        return self.signs.shape[0]

    @property
    def n_joints(self) -> int:
        return self.signs.shape[1]

    def _check(self, v, n, what) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (n,):
            raise ValueError(f"{what}: expected shape ({n},), got {v.shape}")
        return v

    def serial_to_actuators(self, q_serial: np.ndarray) -> np.ndarray:
        q_serial = self._check(q_serial, self.n_joints, "q_serial")
        return self.scaled @ q_serial + self.offsets

    def actuators_to_serial(self, q_act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fuse actuator feedback into serial joints.

        Returns the least-squares serial vector and the per-actuator residual
        (predicted minus measured); nonzero residual means redundant actuators
        disagree, e.g. a desynchronized master/slave pair.
        """
        q_act = self._check(q_act, self.n_actuators, "q_act")
        q_serial = self._pinv @ (q_act - self.offsets)
        residual = self.scaled @ q_serial + self.offsets - q_act
        return q_serial, residual

    def actuator_torques_to_serial(self, tau_act: np.ndarray) -> np.ndarray:
        tau_act = self._check(tau_act, self.n_actuators, "tau_act")
        return self.scaled.T @ tau_act

    def serial_torques_to_actuators(self, tau_serial: np.ndarray) -> np.ndarray:
        """Minimum-norm torque split that round-trips through the transpose map."""
        tau_serial = self._check(tau_serial, self.n_joints, "tau_serial")
        return self._pinv.T @ tau_serial
