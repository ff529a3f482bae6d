import numpy as np
import pytest
import testutil

from op2stack.coupling import CouplingError, CouplingMatrix
from op2stack.model import default_model_path, load_model, model_from_dict


@pytest.fixture(scope="module")
def robot():
    return load_model(default_model_path())


@pytest.fixture(scope="module")
def coupling(robot):
    return CouplingMatrix.from_model(robot)


def idx(coupling, name):
    return coupling.actuator_names.index(name)


def jdx(coupling, name):
    return coupling.joint_names.index(name)


def test_dimensions_and_rank(coupling):
    assert coupling.signs.shape == (34, 20)
    assert np.linalg.matrix_rank(coupling.scaled) == 20


def test_zero_maps_to_zero(coupling):
    assert np.allclose(coupling.serial_to_actuators(np.zeros(20)), 0.0, atol=0.0)
    q, residual = coupling.actuators_to_serial(np.zeros(34))
    assert np.allclose(q, 0.0, atol=0.0)
    assert np.allclose(residual, 0.0, atol=0.0)
    assert np.allclose(coupling.actuator_torques_to_serial(np.zeros(34)), 0.0, atol=0.0)
    assert np.allclose(coupling.serial_torques_to_actuators(np.zeros(20)), 0.0, atol=0.0)


def test_geared_single_actuator_row(coupling):
    q = np.zeros(20)
    q[jdx(coupling, "l_hip_yaw")] = 0.5
    q_act = coupling.serial_to_actuators(q)
    assert q_act[idx(coupling, "l_hip_yaw_servo")] == pytest.approx(1.0, abs=1e-15)


def test_master_slave_mirror(coupling):
    q = np.zeros(20)
    q[jdx(coupling, "l_hip_roll")] = 0.3
    q_act = coupling.serial_to_actuators(q)
    gear = coupling.gears[idx(coupling, "l_hip_roll_master")]
    assert q_act[idx(coupling, "l_hip_roll_master")] == pytest.approx(0.3 * gear, abs=1e-15)
    assert q_act[idx(coupling, "l_hip_roll_slave")] == pytest.approx(-0.3 * gear, abs=1e-15)


def test_master_slave_rows_are_sign_mirrors(coupling):
    for i, name in enumerate(coupling.actuator_names):
        if name.endswith("_slave"):
            j = idx(coupling, name.replace("_slave", "_master"))
            assert np.array_equal(coupling.signs[i], -coupling.signs[j])
            assert coupling.gears[i] == coupling.gears[j]


def test_parallel_linkage_rows_follow_pitch_sum(coupling):
    # The shank-driving rows track hip pitch + knee pitch; the linkage keeps
    # the ankle pitch complementary, so consistent feedback requires
    # ankle = -(hip + knee).
    q = np.zeros(20)
    q[jdx(coupling, "l_hip_pitch")] = 0.2
    q[jdx(coupling, "l_knee_pitch")] = 0.5
    q[jdx(coupling, "l_ankle_pitch")] = -0.7
    q_act = coupling.serial_to_actuators(q)
    top = q_act[idx(coupling, "l_shank_top_master")]
    bottom = q_act[idx(coupling, "l_shank_bottom_master")]
    assert top == pytest.approx(bottom, abs=1e-15)


def test_position_roundtrip_random(coupling):
    rng = np.random.default_rng(21)
    for _ in range(1000):
        q = rng.uniform(-2.0, 2.0, 20)
        back, residual = coupling.actuators_to_serial(coupling.serial_to_actuators(q))
        assert np.max(np.abs(back - q)) < 1e-9
        assert np.max(np.abs(residual)) < 1e-9


def test_desynchronized_pair_blends_and_reports(coupling):
    q = np.zeros(20)
    q[jdx(coupling, "l_hip_roll")] = 0.4
    q_act = coupling.serial_to_actuators(q)
    # Master reads 0.02 rad hot relative to the slave.
    q_act[idx(coupling, "l_hip_roll_master")] += 0.02
    back, residual = coupling.actuators_to_serial(q_act)
    gear = coupling.gears[idx(coupling, "l_hip_roll_master")]
    assert back[jdx(coupling, "l_hip_roll")] == pytest.approx(0.4 + 0.01 / gear, abs=1e-12)
    assert np.max(np.abs(residual)) == pytest.approx(0.01, abs=1e-12)


def test_torque_pair_magnitudes_add(coupling):
    tau_act = np.zeros(34)
    tau_act[idx(coupling, "l_hip_roll_master")] = 1.0
    tau_act[idx(coupling, "l_hip_roll_slave")] = -1.0
    tau = coupling.actuator_torques_to_serial(tau_act)
    assert abs(tau[jdx(coupling, "l_hip_roll")]) == pytest.approx(4.0, abs=1e-15)
    others = np.delete(tau, jdx(coupling, "l_hip_roll"))
    assert np.allclose(others, 0.0, atol=0.0)


def test_torque_virtual_work_identity(coupling):
    rng = np.random.default_rng(22)
    for _ in range(200):
        tau_act = rng.normal(size=34)
        dq = rng.normal(size=20)
        lhs = float(coupling.actuator_torques_to_serial(tau_act) @ dq)
        rhs = float(tau_act @ (coupling.scaled @ dq))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_torque_distribution_roundtrip(coupling):
    rng = np.random.default_rng(23)
    for _ in range(200):
        tau = rng.normal(size=20)
        spread = coupling.serial_torques_to_actuators(tau)
        back = coupling.actuator_torques_to_serial(spread)
        assert np.max(np.abs(back - tau)) < 1e-9


def test_single_actuator_row_carries_full_torque(coupling):
    tau = np.zeros(20)
    tau[jdx(coupling, "l_hip_yaw")] = 3.0
    spread = coupling.serial_torques_to_actuators(tau)
    gear = coupling.gears[idx(coupling, "l_hip_yaw_servo")]
    assert spread[idx(coupling, "l_hip_yaw_servo")] == pytest.approx(3.0 / gear, abs=1e-12)


def test_rank_deficient_coupling_rejected():
    doc = testutil.two_link_doc()
    doc["actuators"] = ["only_base"]
    doc["coupling"] = [{"actuator": "only_base", "terms": [["swing_base", 1]], "gear": 1.0}]
    model = model_from_dict(doc)
    with pytest.raises(CouplingError, match="rank"):
        CouplingMatrix.from_model(model)


def test_dimension_mismatch_raises(coupling):
    with pytest.raises(ValueError):
        coupling.serial_to_actuators(np.zeros(19))
    with pytest.raises(ValueError):
        coupling.actuators_to_serial(np.zeros(33))
    with pytest.raises(ValueError):
        coupling.actuator_torques_to_serial(np.zeros(20))
    with pytest.raises(ValueError):
        coupling.serial_torques_to_actuators(np.zeros(34))


def test_offsets_shift_positions_not_torques(robot):
    base = CouplingMatrix.from_model(robot)
    shifted = CouplingMatrix(
        joint_names=base.joint_names,
        actuator_names=base.actuator_names,
        signs=base.signs.copy(),
        gears=base.gears.copy(),
        offsets=np.full(34, 0.25),
    )
    rng = np.random.default_rng(24)
    q = rng.uniform(-1.0, 1.0, 20)
    assert np.allclose(shifted.serial_to_actuators(q), base.serial_to_actuators(q) + 0.25, atol=1e-12)
    back, residual = shifted.actuators_to_serial(shifted.serial_to_actuators(q))
    assert np.max(np.abs(back - q)) < 1e-9
    tau_act = rng.normal(size=34)
    assert np.allclose(
        shifted.actuator_torques_to_serial(tau_act),
        base.actuator_torques_to_serial(tau_act),
        atol=0.0,
    )
