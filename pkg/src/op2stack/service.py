"""HTTP/WebSocket service backing the trajectory editor.

Stateless apart from the motions directory and at most one running
simulation; every JSON byte that leaves the service is canonical, so
load/save round trips are byte-stable.
"""

from __future__ import annotations

import asyncio
import itertools
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Response, WebSocket
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .harness import ScenarioError, iter_scenario, load_scenario, scenario_from_dict
from .model import default_model_path, forward_kinematics, load_model
from .motion import MotionError, load_motion, motion_bytes, motion_from_dict, motions_dir, play
from .serialize import canonical_json

MOTION_NAME = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    motions_path: Path = field(default_factory=motions_dir)
    model_path: Path = field(default_factory=default_model_path)
    cors_origins: tuple[str, ...] = (
        "http://localhost:5173",
        "http://127.0.0.1:5173",
    )

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ValueError("port must be in [1, 65535]")


def canonical_response(payload, status_code: int = 200) -> Response:
    return Response(content=canonical_json(payload), status_code=status_code,
                    media_type="application/json")


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    model = load_model(config.model_path)
    app = FastAPI(title="trajectory editor service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sim_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def body_errors(request, exc):
        # Keep field diagnostics but report malformed bodies as 400.
        detail = [
            {"field": ".".join(str(p) for p in err.get("loc", ())),
             "message": err.get("msg", "invalid")}
            for err in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"detail": detail})

    def motion_path(name: str) -> Path:
        if not MOTION_NAME.match(name):
            raise HTTPException(status_code=400,
                                detail=f"invalid motion name {name!r}")
        return config.motions_path / f"{name}.motion"

    @app.get("/api/model")
    def get_model():
        geometry = model.leg_geometry
        return canonical_response({
            "name": model.name,
            "dof": len(model.joint_names),
            "actuator_count": len(model.actuators),
            "total_mass": model.total_mass(),
            "joints": [
                {"name": j.name, "chain": j.chain, "lower": j.lower, "upper": j.upper}
                for j in model.joints
            ],
            "links": [{"name": l.name, "parent": l.parent} for l in model.links],
            "actuators": list(model.actuators),
            "leg_geometry": {
                "thigh_length": geometry.thigh_length,
                "shank_length": geometry.shank_length,
                "hip_offset_y": geometry.hip_offset_y,
                "foot_offset_z": geometry.foot_offset_z,
                "full_length": geometry.full_length,
            },
            "motions": sorted(p.stem for p in config.motions_path.glob("*.motion")),
        })

    @app.get("/api/motions/{name}")
    def get_motion(name: str):
        path = motion_path(name)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown motion {name!r}")
        return Response(content=motion_bytes(load_motion(path)),
                        media_type="application/json")

    @app.put("/api/motions/{name}")
    def put_motion(name: str, body: dict = Body(...)):
        path = motion_path(name)
        try:
            motion = motion_from_dict(body)
        except MotionError as err:
            raise HTTPException(status_code=400, detail=str(err)) from None
        if motion.name != name:
            raise HTTPException(
                status_code=400,
                detail=f"field name: motion is named {motion.name!r}, url says {name!r}")
        data = motion_bytes(motion)
        path.write_bytes(data)
        return Response(content=data, media_type="application/json")

    @app.post("/api/interpolate")
    def interpolate(body: dict = Body(...)):
        if "motion" not in body:
            raise HTTPException(status_code=400, detail="field motion: required")
        try:
            rate = float(body.get("rate", 100.0))
        except (TypeError, ValueError):
            raise HTTPException(status_code=400,
                                detail="field rate: must be a number") from None
        if not (1.0 <= rate <= 1000.0):
            raise HTTPException(status_code=400,
                                detail="field rate: must be in [1, 1000] Hz")
        try:
            motion = motion_from_dict(body["motion"])
            samples = list(play(motion, 1.0 / rate, itertools.repeat((0.0, 0.0))))
        except MotionError as err:
            raise HTTPException(status_code=400,
                                detail=f"field motion: {err}") from None
        joints = list(motion.joints)
        return canonical_response({
            "times": [s.time for s in samples],
            "positions": {j: [s.positions[j] for s in samples] for j in joints},
            "velocities": {j: [s.velocities[j] for s in samples] for j in joints},
            "efforts": {j: [s.efforts[j] for s in samples] for j in joints},
            "supports": [s.support for s in samples],
        })

    @app.post("/api/fk")
    def fk(body: dict = Body(...)):
        if "q" not in body:
            raise HTTPException(status_code=400, detail="field q: required")
        q = body["q"]
        try:
            if isinstance(q, dict):
                vector = model.q_from_dict({k: float(v) for k, v in q.items()})
            else:
                vector = np.asarray(q, dtype=float)
                if vector.shape != (len(model.joint_names),):
                    raise ValueError(
                        f"expected {len(model.joint_names)} joint angles, got {vector.shape}")
        except (KeyError, TypeError, ValueError) as err:
            raise HTTPException(status_code=400, detail=f"field q: {err}") from None
        result = forward_kinematics(model, vector)
        return canonical_response({
            "positions": {l.name: result.position(l.name).tolist() for l in model.links},
            "rotations": {l.name: result.rotation(l.name).tolist() for l in model.links},
        })

    def parse_sim_request(body: dict):
        if "scenario" not in body:
            raise HTTPException(status_code=400, detail="field scenario: required")
        spec = body["scenario"]
        try:
            if isinstance(spec, str):
                return load_scenario(spec)
            return scenario_from_dict(spec)
        except ScenarioError as err:
            raise HTTPException(status_code=400,
                                detail=f"field scenario: {err}") from None

    @app.post("/api/sim/run")
    def sim_run(body: dict = Body(...)):
        scenario = parse_sim_request(body)
        if not sim_lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail="a simulation is already running")
        try:
            from .harness import run_scenario

            _, metrics = run_scenario(model, scenario)
        finally:
            sim_lock.release()
        return canonical_response(metrics)

    @app.websocket("/api/sim/stream")
    async def sim_stream(socket: WebSocket):
        await socket.accept()
        try:
            request = await socket.receive_json()
        except Exception:
            await socket.close(code=1003)
            return
        try:
            scenario = parse_sim_request(request if isinstance(request, dict) else {})
        except HTTPException as err:
            await socket.send_json({"error": err.detail})
            await socket.close()
            return
        if not sim_lock.acquire(blocking=False):
            await socket.send_json({"error": "a simulation is already running"})
            await socket.close()
            return
        try:
            done = object()
            ticks = iter_scenario(model, scenario)
            worst = 0.0
            while True:
                record = await asyncio.to_thread(next, ticks, done)
                if record is done:
                    break
                worst = max(worst, float(np.max(np.abs(record.joint_errors))))
                await socket.send_text(canonical_json({
                    "tick": record.tick,
                    "time": record.time,
                    "fused": list(record.fused),
                    "hemisphere": record.hemisphere,
                    "positions": {
                        name: float(record.measured_q[i])
                        for i, name in enumerate(model.joint_names)
                    },
                    "trunk": list(record.trunk_xy),
                }).decode())
            await socket.send_text(canonical_json(
                {"done": True, "worst_error": worst}).decode())
            await socket.close()
        finally:
            sim_lock.release()

    return app
