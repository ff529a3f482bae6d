import numpy as np
import pytest
import testutil

from op2stack.dynamics import (
    DynamicsError,
    bias_torques,
    forward_dynamics,
    gravity_torques,
    inverse_dynamics,
    kinetic_energy,
    mass_matrix,
    potential_energy,
)
from op2stack.model import (
    JointSpec,
    LinkSpec,
    RobotModel,
    default_model_path,
    load_model,
    model_from_dict,
)


@pytest.fixture(scope="module")
def robot():
    return load_model(default_model_path())


@pytest.fixture(scope="module")
def two_link():
    return testutil.two_link_model()


def random_pose(model, rng, margin=0.2):
    lo, hi = model.joint_limits().T
    return rng.uniform(lo + margin * (hi - lo), hi - margin * (hi - lo))


def test_two_link_matches_lagrangian_oracle(two_link):
    rng = np.random.default_rng(7)
    for _ in range(300):
        q = rng.uniform(-3.0, 3.0, 2)
        qd = rng.uniform(-4.0, 4.0, 2)
        qdd = rng.uniform(-8.0, 8.0, 2)
        tau = inverse_dynamics(two_link, q, qd, qdd, testutil.TWO_LINK_GRAVITY)
        expect = testutil.two_link_oracle_torques(q, qd, qdd)
        assert np.allclose(tau, expect, rtol=1e-9, atol=1e-9)


def test_two_link_mass_matrix_matches_oracle(two_link):
    rng = np.random.default_rng(8)
    for _ in range(50):
        q = rng.uniform(-3.0, 3.0, 2)
        assert np.allclose(mass_matrix(two_link, q), testutil.two_link_oracle_mass(q), atol=1e-10)


def test_pendulum_static_torque(two_link):
    # Horizontal pose: torque at the base joint is the full moment of both
    # link weights; at the elbow it is just the distal link weight.
    p = testutil.TWO_LINK
    tau = gravity_torques(two_link, np.zeros(2), testutil.TWO_LINK_GRAVITY)
    expect_base = (p["m1"] * p["r1"] + p["m2"] * (p["L1"] + p["r2"])) * p["g"]
    expect_elbow = p["m2"] * p["r2"] * p["g"]
    assert tau[0] == pytest.approx(expect_base, abs=1e-12)
    assert tau[1] == pytest.approx(expect_elbow, abs=1e-12)
    # Hanging straight down: no holding torque.
    hang = np.array([-np.pi / 2.0, 0.0])
    assert np.allclose(gravity_torques(two_link, hang, testutil.TWO_LINK_GRAVITY), 0.0, atol=1e-12)


def test_gravity_torques_match_potential_gradient(robot):
    rng = np.random.default_rng(11)
    q = random_pose(robot, rng)
    tau = gravity_torques(robot, q)
    h = 1e-6
    for j in range(robot.serial_dof):
        dq = np.zeros(robot.serial_dof)
        dq[j] = h
        grad = (potential_energy(robot, q + dq) - potential_energy(robot, q - dq)) / (2.0 * h)
        assert tau[j] == pytest.approx(grad, abs=1e-5)


def test_mass_matrix_symmetric_positive_definite(robot):
    rng = np.random.default_rng(12)
    for _ in range(5):
        q = random_pose(robot, rng)
        m = mass_matrix(robot, q)
        assert np.max(np.abs(m - m.T)) < 1e-9
        assert np.min(np.linalg.eigvalsh(m)) > 0.0


def test_forward_inverse_roundtrip(robot):
    rng = np.random.default_rng(13)
    for _ in range(3):
        q = random_pose(robot, rng)
        qd = rng.uniform(-2.0, 2.0, robot.serial_dof)
        qdd = rng.uniform(-5.0, 5.0, robot.serial_dof)
        tau = inverse_dynamics(robot, q, qd, qdd)
        back = forward_dynamics(robot, q, qd, tau)
        assert np.allclose(back, qdd, atol=1e-6)


def test_zero_gravity_zero_motion_means_zero_torque(robot):
    rng = np.random.default_rng(14)
    zero = np.zeros(robot.serial_dof)
    for _ in range(3):
        q = random_pose(robot, rng)
        tau = inverse_dynamics(robot, q, zero, zero, np.zeros(3))
        assert np.allclose(tau, 0.0, atol=1e-12)


def test_bias_equals_inverse_dynamics_at_zero_accel(robot):
    rng = np.random.default_rng(15)
    q = random_pose(robot, rng)
    qd = rng.uniform(-1.0, 1.0, robot.serial_dof)
    zero = np.zeros(robot.serial_dof)
    assert np.allclose(bias_torques(robot, q, qd), inverse_dynamics(robot, q, qd, zero), atol=0.0)


def test_singular_mass_matrix_raises():
    # A massless distal link is physically degenerate; building it directly
    # skips document validation on purpose.
    trunk = LinkSpec("trunk", None, np.zeros(3), np.array([1.0, 0, 0, 0]), 1.0, np.zeros(3), np.eye(3) * 0.01)
    ghost = LinkSpec("ghost", "trunk", np.zeros(3), np.array([1.0, 0, 0, 0]), 0.0, np.zeros(3), np.zeros((3, 3)))
    joint = JointSpec("spin", "ghost", np.array([0.0, 0, 1.0]), -1.0, 1.0, "neck")
    from op2stack.model import LegGeometry, ServoSpec

    model = RobotModel("degenerate", [trunk, ghost], [joint], [], [], ServoSpec(), LegGeometry(0.3, 0.3, 0.0, 0.055, 0.045))
    with pytest.raises(DynamicsError):
        forward_dynamics(model, np.zeros(1), np.zeros(1), np.zeros(1))


def test_energy_conserved_under_passive_swing(two_link):
    # Semi-implicit Euler at a fine step keeps the passive swing's total
    # energy within 1% over five simulated seconds.
    dt = 1e-4
    steps = 50_000
    q = np.array([0.3, 0.4])
    qd = np.zeros(2)
    tau = np.zeros(2)
    e0 = potential_energy(two_link, q, testutil.TWO_LINK_GRAVITY) + kinetic_energy(two_link, q, qd)
    worst = 0.0
    for k in range(steps):
        qdd = forward_dynamics(two_link, q, qd, tau, testutil.TWO_LINK_GRAVITY)
        qd = qd + qdd * dt
        q = q + qd * dt
        if k % 200 == 0:
            e = potential_energy(two_link, q, testutil.TWO_LINK_GRAVITY) + kinetic_energy(two_link, q, qd)
            worst = max(worst, abs(e - e0))
    e_final = potential_energy(two_link, q, testutil.TWO_LINK_GRAVITY) + kinetic_energy(two_link, q, qd)
    worst = max(worst, abs(e_final - e0))
    assert worst / abs(e0) < 0.01


def test_kinetic_energy_matches_mass_matrix_quadratic(robot):
    rng = np.random.default_rng(16)
    q = random_pose(robot, rng)
    qd = rng.uniform(-2.0, 2.0, robot.serial_dof)
    quad = 0.5 * float(qd @ (mass_matrix(robot, q) @ qd))
    assert kinetic_energy(robot, q, qd) == pytest.approx(quad, rel=1e-9)


def test_shape_validation():
    model = testutil.two_link_model()
    with pytest.raises(ValueError):
        inverse_dynamics(model, np.zeros(3), np.zeros(2), np.zeros(2))
