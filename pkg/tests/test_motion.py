import json
import math

import numpy as np
import pytest

from op2stack.model import default_model_path, load_model
from op2stack.motion import (
    Keyframe,
    Motion,
    MotionError,
    PidGains,
    fade,
    interpolate,
    load_motion,
    motion_bytes,
    motion_from_dict,
    motion_to_dict,
    motions_dir,
    play,
)


def simple_motion(**kwargs):
    frames = kwargs.pop("keyframes", (
        Keyframe(0.0, {"a": 0.0, "b": 1.0}, {"a": 0.0}, {"a": 1.0}, (), "both"),
        Keyframe(1.0, {"a": 1.0, "b": -1.0}, {"a": 0.0}, {"a": 0.5}, (), "both"),
    ))
    return Motion(name=kwargs.pop("name", "demo"), joints=("a", "b"),
                  keyframes=frames, **kwargs)


class TestInterpolate:
    def test_hermite_midpoint_values(self):
        m = simple_motion()
        s = interpolate(m, 0.5)
        assert s.positions["a"] == pytest.approx(0.5, abs=1e-12)
        assert s.velocities["a"] == pytest.approx(1.5, abs=1e-12)

    def test_keyframe_pass_through(self):
        rng = np.random.default_rng(3)
        times = np.cumsum(rng.uniform(0.2, 0.8, 6))
        frames = tuple(
            Keyframe(float(t),
                     {"a": float(rng.normal()), "b": float(rng.normal())},
                     {"a": float(rng.normal()), "b": float(rng.normal())},
                     {}, (), "both")
            for t in times
        )
        m = Motion(name="rand", joints=("a", "b"), keyframes=frames)
        for kf in frames:
            s = interpolate(m, kf.time)
            for j in ("a", "b"):
                assert s.positions[j] == pytest.approx(kf.positions[j], abs=1e-12)
                assert s.velocities[j] == pytest.approx(kf.velocities[j], abs=1e-12)

    def test_c1_across_boundaries(self):
        rng = np.random.default_rng(5)
        times = np.cumsum(rng.uniform(0.3, 0.9, 5))
        frames = tuple(
            Keyframe(float(t), {"a": float(rng.normal())}, {"a": float(rng.normal())},
                     {}, (), "both")
            for t in times
        )
        m = Motion(name="c1", joints=("a",), keyframes=frames)
        h = 1e-8
        for kf in frames[1:-1]:
            fd = (interpolate(m, kf.time + h).positions["a"]
                  - interpolate(m, kf.time - h).positions["a"]) / (2.0 * h)
            assert fd == pytest.approx(interpolate(m, kf.time).velocities["a"], abs=1e-6)

    def test_interior_velocity_consistent_with_position(self):
        m = simple_motion()
        h = 1e-7
        for t in (0.2, 0.5, 0.77):
            fd = (interpolate(m, t + h).positions["a"]
                  - interpolate(m, t - h).positions["a"]) / (2.0 * h)
            assert fd == pytest.approx(interpolate(m, t).velocities["a"], abs=1e-6)

    def test_single_keyframe_constant(self):
        m = Motion(name="one", joints=("a",),
                   keyframes=(Keyframe(0.5, {"a": 0.3}, {"a": 0.7}, {"a": 0.9}, (), "left"),))
        for t in (-1.0, 0.0, 0.5, 3.0):
            s = interpolate(m, t)
            assert s.positions["a"] == 0.3
            assert s.velocities["a"] == 0.7
            assert s.efforts["a"] == 0.9
            assert s.support == "left"

    def test_out_of_range_clamps(self):
        m = simple_motion()
        early = interpolate(m, -5.0)
        late = interpolate(m, 42.0)
        assert early.positions["a"] == 0.0
        assert early.time == 0.0
        assert late.positions["a"] == 1.0
        assert late.time == 1.0

    def test_effort_linear(self):
        m = simple_motion()
        assert interpolate(m, 0.5).efforts["a"] == pytest.approx(0.75, abs=1e-12)
        assert interpolate(m, 0.25).efforts["a"] == pytest.approx(0.875, abs=1e-12)
        # joint without effort entries defaults to full effort
        assert interpolate(m, 0.5).efforts["b"] == 1.0

    def test_support_holds_from_segment_start(self):
        frames = (
            Keyframe(0.0, {"a": 0.0}, {}, {}, (), "both"),
            Keyframe(1.0, {"a": 1.0}, {}, {}, (), "left"),
            Keyframe(2.0, {"a": 0.0}, {}, {}, (), "right"),
        )
        m = Motion(name="sup", joints=("a",), keyframes=frames)
        assert interpolate(m, 0.5).support == "both"
        assert interpolate(m, 1.0).support == "left"
        assert interpolate(m, 1.5).support == "left"
        assert interpolate(m, 2.0).support == "right"


class TestPlay:
    def pid_motion(self):
        frames = (
            Keyframe(0.0, {"a": 0.0, "b": 0.0}, {}, {}, ("a",), "both"),
            Keyframe(1.0, {"a": 1.0, "b": 2.0}, {}, {}, ("a",), "both"),
        )
        return Motion(name="pid", joints=("a", "b"), keyframes=frames,
                      pid_gains={"a": PidGains(axis="pitch", p=0.5)})

    def test_zero_error_matches_interpolation(self):
        m = self.pid_motion()
        errors = [(0.0, 0.0)] * 1000
        for sample in play(m, 0.01, errors):
            base = interpolate(m, sample.time)
            assert sample.positions == base.positions
            assert sample.pid_offsets == {"a": 0.0}

    def test_constant_error_p_only_offset(self):
        m = self.pid_motion()
        e = 0.12
        samples = list(play(m, 0.01, ((e, 0.0) for _ in range(10000))))
        for sample in samples:
            base = interpolate(m, sample.time)
            assert sample.positions["a"] == pytest.approx(base.positions["a"] + 0.5 * e, abs=1e-12)
            assert sample.positions["b"] == base.positions["b"]

    def test_roll_axis_gain_uses_roll_error(self):
        frames = (
            Keyframe(0.0, {"a": 0.0}, {}, {}, ("a",), "both"),
            Keyframe(1.0, {"a": 0.0}, {}, {}, ("a",), "both"),
        )
        m = Motion(name="roll", joints=("a",), keyframes=frames,
                   pid_gains={"a": PidGains(axis="roll", p=1.0)})
        samples = list(play(m, 0.1, [(0.5, 0.2)] * 100))
        assert samples[0].pid_offsets["a"] == pytest.approx(0.2, abs=1e-12)

    def test_duration_within_one_tick(self):
        m = self.pid_motion()
        dt = 0.013
        samples = list(play(m, dt, []))
        assert samples[-1].time == m.duration
        assert samples[0].time == 0.0
        assert len(samples) == math.ceil(m.duration / dt) + 1

    def test_deterministic(self):
        m = self.pid_motion()
        errs = [(0.01 * k, -0.005 * k) for k in range(200)]
        a = [(s.time, tuple(sorted(s.positions.items()))) for s in play(m, 0.01, errs)]
        b = [(s.time, tuple(sorted(s.positions.items()))) for s in play(m, 0.01, errs)]
        assert a == b

    def test_integral_term_accumulates_and_clamps(self):
        frames = (
            Keyframe(0.0, {"a": 0.0}, {}, {}, ("a",), "both"),
            Keyframe(10.0, {"a": 0.0}, {}, {}, ("a",), "both"),
        )
        m = Motion(name="integ", joints=("a",), keyframes=frames,
                   pid_gains={"a": PidGains(axis="pitch", i=1.0, i_max=0.5)})
        samples = list(play(m, 0.01, ((1.0, 0.0) for _ in range(10001))))
        # early on the integral grows roughly linearly, later it clamps
        assert samples[30].pid_offsets["a"] == pytest.approx(0.31, abs=0.02)
        assert samples[-1].pid_offsets["a"] == pytest.approx(0.5, abs=1e-12)

    def test_derivative_term_tracks_ramp(self):
        frames = (
            Keyframe(0.0, {"a": 0.0}, {}, {}, ("a",), "both"),
            Keyframe(5.0, {"a": 0.0}, {}, {}, ("a",), "both"),
        )
        m = Motion(name="deriv", joints=("a",), keyframes=frames,
                   pid_gains={"a": PidGains(axis="pitch", d=1.0)})
        slope = 0.3
        dt = 0.002
        errs = ((slope * k * dt, 0.0) for k in range(3000))
        samples = list(play(m, dt, errs))
        assert samples[1000].pid_offsets["a"] == pytest.approx(slope, rel=1e-2)

    def test_error_stream_exhaustion_reads_zero(self):
        m = self.pid_motion()
        samples = list(play(m, 0.1, [(0.4, 0.0)] * 3))
        assert samples[2].pid_offsets["a"] == pytest.approx(0.2, abs=1e-12)
        assert samples[5].pid_offsets["a"] == 0.0

    def test_pid_only_on_enabled_frames(self):
        frames = (
            Keyframe(0.0, {"a": 0.0}, {}, {}, (), "both"),
            Keyframe(1.0, {"a": 0.0}, {}, {}, ("a",), "both"),
            Keyframe(2.0, {"a": 0.0}, {}, {}, (), "both"),
        )
        m = Motion(name="gated", joints=("a",), keyframes=frames,
                   pid_gains={"a": PidGains(axis="pitch", p=1.0)})
        samples = {round(s.time, 3): s for s in play(m, 0.25, [(0.1, 0.0)] * 100)}
        assert samples[0.5].pid_offsets == {}
        assert samples[1.25].pid_offsets == {"a": pytest.approx(0.1)}
        assert samples[2.0].pid_offsets == {}

    def test_dt_validation(self):
        with pytest.raises(ValueError):
            list(play(simple_motion(), 0.0, []))


class TestFade:
    def test_linear_midpoint(self):
        ramp = fade({"a": 0.0, "b": 0.0}, 1.0, 2.0)
        assert ramp(1.0) == {"a": 0.5, "b": 0.5}
        assert ramp(0.0) == {"a": 0.0, "b": 0.0}
        assert ramp(2.0) == {"a": 1.0, "b": 1.0}

    def test_fade_to_current_constant(self):
        ramp = fade({"a": 0.7}, 0.7, 1.5)
        for t in (0.0, 0.3, 1.5, 9.0):
            assert ramp(t)["a"] == pytest.approx(0.7, abs=1e-12)

    def test_clamps_inputs_and_time(self):
        ramp = fade({"a": 1.4, "b": -0.2}, 0.5, 1.0)
        assert ramp(0.0) == {"a": 1.0, "b": 0.0}
        assert ramp(99.0) == {"a": 0.5, "b": 0.5}
        assert ramp(-1.0) == {"a": 1.0, "b": 0.0}

    def test_duration_validation(self):
        with pytest.raises(ValueError):
            fade({"a": 0.0}, 1.0, 0.0)


class TestValidation:
    def test_times_strictly_increasing(self):
        frames = (
            Keyframe(0.0, {"a": 0.0}, {}, {}, (), "both"),
            Keyframe(0.0, {"a": 1.0}, {}, {}, (), "both"),
        )
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a",), keyframes=frames)

    def test_effort_range(self):
        frames = (Keyframe(0.0, {"a": 0.0}, {}, {"a": 1.2}, (), "both"),)
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a",), keyframes=frames)

    def test_positions_must_cover_joints(self):
        frames = (Keyframe(0.0, {"a": 0.0}, {}, {}, (), "both"),)
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a", "b"), keyframes=frames)

    def test_unknown_pid_joint(self):
        frames = (Keyframe(0.0, {"a": 0.0}, {}, {}, ("zz",), "both"),)
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a",), keyframes=frames)

    def test_bad_support(self):
        frames = (Keyframe(0.0, {"a": 0.0}, {}, {}, (), "flying"),)
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a",), keyframes=frames)

    def test_no_keyframes(self):
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a",), keyframes=())

    def test_pid_gains_key_outside_joints(self):
        frames = (Keyframe(0.0, {"a": 0.0}, {}, {}, (), "both"),)
        with pytest.raises(MotionError):
            Motion(name="bad", joints=("a",), keyframes=frames,
                   pid_gains={"zz": PidGains(axis="pitch")})

    def test_pid_gain_validation(self):
        with pytest.raises(MotionError):
            PidGains(axis="yaw")
        with pytest.raises(MotionError):
            PidGains(axis="pitch", p=-1.0)


class TestSerialization:
    def test_round_trip_equality(self):
        m = simple_motion(pid_gains={"a": PidGains(axis="roll", p=0.4, d=0.01)})
        again = motion_from_dict(motion_to_dict(m))
        assert again == m

    def test_canonical_bytes_stable(self):
        m = simple_motion()
        raw = motion_bytes(m)
        again = motion_from_dict(json.loads(raw.decode()))
        assert motion_bytes(again) == raw

    def test_missing_keys_rejected(self):
        with pytest.raises(MotionError):
            motion_from_dict({"name": "x", "joints": ["a"]})
        with pytest.raises(MotionError):
            motion_from_dict({"name": "x", "joints": ["a"],
                              "keyframes": [{"pos": {"a": 0.0}}]})


@pytest.fixture(scope="module")
def model():
    return load_model(default_model_path())


class TestShippedMotions:
    @pytest.mark.parametrize("name", ["kick", "getup_prone", "getup_supine"])
    def test_loads_and_round_trips_bytes(self, name):
        path = motions_dir() / f"{name}.motion"
        m = load_motion(path)
        assert m.name == name
        assert motion_bytes(m) == path.read_bytes()

    @pytest.mark.parametrize("name", ["kick", "getup_prone", "getup_supine"])
    def test_covers_all_joints_and_respects_limits(self, name, model):
        m = load_motion(motions_dir() / f"{name}.motion")
        assert set(m.joints) == set(model.joint_names)
        limits = dict(zip(model.joint_names, model.joint_limits()))
        for t in np.linspace(0.0, m.duration, 400):
            s = interpolate(m, float(t))
            for j, pos in s.positions.items():
                lo, hi = limits[j]
                assert lo - 1e-9 <= pos <= hi + 1e-9, f"{name}:{j} at t={t:.3f} -> {pos:.3f}"

    def test_kick_uses_single_support(self):
        m = load_motion(motions_dir() / "kick.motion")
        supports = {kf.support for kf in m.keyframes}
        assert "left" in supports and "both" in supports
        assert m.pid_gains  # feedback stabilization configured
