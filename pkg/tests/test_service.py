import itertools
import json
import shutil

import pytest
from fastapi.testclient import TestClient

from op2stack.model import default_model_path, forward_kinematics, load_model
from op2stack.motion import load_motion, motion_bytes, motion_from_dict, motions_dir, play
from op2stack.serialize import quantize_floats
from op2stack.service import ServiceConfig, create_app

TINY_SIM = {
    "name": "tiny", "mode": "fixed_base_dynamics",
    "duration": 0.05, "motion": "squat_hold", "seed": 4,
}


@pytest.fixture()
def client(tmp_path):
    motions = tmp_path / "motions"
    motions.mkdir()
    for src in motions_dir().glob("*.motion"):
        shutil.copy(src, motions / src.name)
    config = ServiceConfig(motions_path=motions)
    with TestClient(create_app(config)) as c:
        yield c


@pytest.fixture(scope="module")
def robot():
    return load_model(default_model_path())


class TestModelEndpoint:
    def test_summary_counts(self, client):
        doc = client.get("/api/model").json()
        assert doc["dof"] == 20
        assert doc["actuator_count"] == 34
        assert doc["total_mass"] == pytest.approx(17.5)
        assert len(doc["joints"]) == 20
        assert all(j["lower"] < j["upper"] for j in doc["joints"])
        assert "squat_hold" in doc["motions"]

    def test_bytes_are_stable(self, client):
        a = client.get("/api/model").content
        b = client.get("/api/model").content
        assert a == b


class TestMotionEndpoints:
    def test_get_returns_canonical_file(self, client):
        body = client.get("/api/motions/squat_hold")
        assert body.status_code == 200
        expected = motion_bytes(load_motion(motions_dir() / "squat_hold.motion"))
        assert body.content == expected

    def test_get_unknown_is_404(self, client):
        assert client.get("/api/motions/nope").status_code == 404

    def test_put_then_get_byte_identical(self, client):
        doc = json.loads(client.get("/api/motions/squat_hold").content)
        doc["name"] = "squat_edit"
        doc["keyframes"][1]["pos"]["l_elbow_pitch"] = -0.321
        put = client.put("/api/motions/squat_edit", json=doc)
        assert put.status_code == 200
        got = client.get("/api/motions/squat_edit")
        assert got.content == put.content
        again = client.put("/api/motions/squat_edit", json=json.loads(got.content))
        assert again.content == got.content

    def test_put_name_mismatch_is_400(self, client):
        doc = json.loads(client.get("/api/motions/squat_hold").content)
        resp = client.put("/api/motions/other_name", json=doc)
        assert resp.status_code == 400
        assert "name" in resp.json()["detail"]

    def test_put_invalid_motion_is_400(self, client):
        resp = client.put("/api/motions/broken", json={"name": "broken"})
        assert resp.status_code == 400
        assert "joints" in resp.json()["detail"]

    def test_put_non_object_body_is_400_with_fields(self, client):
        resp = client.put("/api/motions/squat_hold", json="just a string")
        assert resp.status_code == 400
        detail = resp.json()["detail"]
        assert isinstance(detail, list) and "field" in detail[0]

    def test_weird_names_rejected(self, client):
        assert client.get("/api/motions/squat.hold").status_code == 400


class TestInterpolate:
    def test_matches_motion_player_exactly(self, client):
        doc = json.loads(client.get("/api/motions/squat_hold").content)
        resp = client.post("/api/interpolate", json={"motion": doc, "rate": 100})
        assert resp.status_code == 200
        payload = resp.json()
        motion = motion_from_dict(doc)
        samples = list(play(motion, 0.01, itertools.repeat((0.0, 0.0))))
        duration = motion.keyframes[-1].time
        assert len(payload["times"]) == int(duration * 100) + 1
        assert payload["times"] == quantize_floats([s.time for s in samples])
        for joint in motion.joints:
            assert payload["positions"][joint] == quantize_floats(
                [s.positions[joint] for s in samples])
            assert payload["velocities"][joint] == quantize_floats(
                [s.velocities[joint] for s in samples])
        assert payload["supports"] == [s.support for s in samples]

    def test_endpoints_equal_keyframes(self, client):
        doc = json.loads(client.get("/api/motions/squat_hold").content)
        payload = client.post("/api/interpolate", json={"motion": doc, "rate": 50}).json()
        first, last = doc["keyframes"][0], doc["keyframes"][-1]
        for joint, value in first["pos"].items():
            assert payload["positions"][joint][0] == pytest.approx(value, abs=1e-9)
        for joint, value in last["pos"].items():
            assert payload["positions"][joint][-1] == pytest.approx(value, abs=1e-9)

    def test_bad_rate_is_400(self, client):
        doc = json.loads(client.get("/api/motions/squat_hold").content)
        resp = client.post("/api/interpolate", json={"motion": doc, "rate": 0})
        assert resp.status_code == 400
        assert "rate" in resp.json()["detail"]

    def test_missing_motion_is_400(self, client):
        resp = client.post("/api/interpolate", json={"rate": 100})
        assert resp.status_code == 400
        assert "motion" in resp.json()["detail"]


class TestForwardKinematics:
    def test_zero_pose_feet_at_full_extension(self, client, robot):
        resp = client.post("/api/fk", json={"q": [0.0] * 20})
        assert resp.status_code == 200
        positions = resp.json()["positions"]
        geometry = robot.leg_geometry
        for side in ("l", "r"):
            hip = positions[f"{side}_hip_assembly"]
            sole = positions[f"{side}_sole"]
            drop = hip[2] - sole[2]
            assert drop == pytest.approx(geometry.full_length, abs=1e-9)

    def test_matches_library_fk(self, client, robot):
        q = {"l_knee_pitch": 0.9, "r_shoulder_pitch": -0.4}
        resp = client.post("/api/fk", json={"q": q})
        positions = resp.json()["positions"]
        fk = forward_kinematics(robot, robot.q_from_dict(q))
        for link in robot.links:
            assert positions[link.name] == quantize_floats(
                fk.position(link.name).tolist())

    def test_unknown_joint_is_400(self, client):
        resp = client.post("/api/fk", json={"q": {"tail_pitch": 0.1}})
        assert resp.status_code == 400
        assert "q" in resp.json()["detail"]

    def test_wrong_length_is_400(self, client):
        resp = client.post("/api/fk", json={"q": [0.0] * 7})
        assert resp.status_code == 400


class TestSimEndpoints:
    def test_run_returns_metrics(self, client):
        resp = client.post("/api/sim/run", json={"scenario": TINY_SIM})
        assert resp.status_code == 200
        metrics = resp.json()
        assert metrics["ticks"] == 5
        assert metrics["scenario"] == "tiny"
        assert "per_joint" in metrics

    def test_shipped_scenario_by_name_is_accepted(self, client):
        resp = client.post("/api/sim/run", json={"scenario": "squat_hold"})
        assert resp.status_code == 200
        assert resp.json()["mode"] == "fixed_base_dynamics"

    def test_bad_scenario_is_400(self, client):
        resp = client.post("/api/sim/run", json={"scenario": {"name": "x"}})
        assert resp.status_code == 400
        assert "scenario" in resp.json()["detail"]

    def test_stream_ticks_then_done(self, client):
        with client.websocket_connect("/api/sim/stream") as socket:
            socket.send_json({"scenario": TINY_SIM})
            ticks = []
            while True:
                msg = socket.receive_json()
                if msg.get("done"):
                    break
                ticks.append(msg)
            assert [m["tick"] for m in ticks] == [0, 1, 2, 3, 4]
            assert all("positions" in m and "fused" in m for m in ticks)

    def test_concurrent_run_is_409(self, client):
        walk = {
            "name": "busy", "mode": "kinematic_walk", "duration": 1.0,
            "gait": {"vx": 0.3}, "seed": 1,
        }
        with client.websocket_connect("/api/sim/stream") as socket:
            socket.send_json({"scenario": walk})
            first = socket.receive_json()
            assert first["tick"] == 0
            blocked = client.post("/api/sim/run", json={"scenario": TINY_SIM})
            assert blocked.status_code == 409
            while True:
                if socket.receive_json().get("done"):
                    break
        after = client.post("/api/sim/run", json={"scenario": TINY_SIM})
        assert after.status_code == 200

    def test_stream_rejects_bad_scenario(self, client):
        with client.websocket_connect("/api/sim/stream") as socket:
            socket.send_json({"scenario": {"name": "x", "mode": "bad"}})
            msg = socket.receive_json()
            assert "error" in msg
