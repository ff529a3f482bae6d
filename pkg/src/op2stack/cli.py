"""Command-line entry points.

One binary fronts the whole library: scenario runs, motion playback,
vision tooling, model checks, bus log decoding and the editor service.
Exit codes: 0 success, 1 usage problem, 2 runtime failure.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .model import default_model_path, load_model
from .motion import load_motion, motions_dir, play
from .servo_bus import (
    INSTR_PING,
    INSTR_READ,
    INSTR_SYNC_WRITE,
    INSTR_WRITE,
    scan_stream,
)
from .vision import (
    CameraIntrinsics,
    CameraPose,
    DistortionCoeffs,
    LandmarkObservation,
    build_undistort_maps,
    calibrate_extrinsics,
)

# Wide-angle default camera for the vision tools; overridable per file.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=330.0, fy=330.0, cx=320.0, cy=240.0,
                                      width=640, height=480)
DEFAULT_COEFFS = DistortionCoeffs(k1=-0.15, k2=0.02, p1=5e-4, p2=-5e-4)


def camera_from_file(path: str | None) -> tuple[CameraIntrinsics, DistortionCoeffs]:
    """Read an intrinsics/coeffs JSON file; None keeps the defaults."""
    if path is None:
        return DEFAULT_INTRINSICS, DEFAULT_COEFFS
    doc = json.loads(Path(path).read_text())
    intrinsics = CameraIntrinsics(**doc["intrinsics"])
    coeffs = DistortionCoeffs(**doc.get("coeffs", {}))
    return intrinsics, coeffs


def _resolve_motion(spec: str) -> Path:
    path = Path(spec)
    if path.exists():
        return path
    candidate = motions_dir() / f"{spec}.motion"
    if candidate.exists():
        return candidate
    raise FileNotFoundError(f"no motion file or shipped motion named {spec!r}")


@click.group()
def cli():
    """Humanoid robot software stack tools."""


@cli.group()
def sim():
    """Scenario simulation."""


@sim.command("run")
@click.argument("scenario")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Write the per-tick tracking log as CSV.")
@click.option("--seed", type=int, default=None,
              help="Override the scenario's random seed.")
def sim_run(scenario, out, seed):
    """Run a scenario by name or JSON path and print summary metrics."""
    from .harness import load_scenario, run_scenario

    sc = load_scenario(scenario)
    if seed is not None:
        sc = dataclasses.replace(sc, seed=seed)
    model = load_model(default_model_path())
    log, metrics = run_scenario(model, sc)
    click.echo(f"scenario {metrics['scenario']} ({metrics['mode']}): "
               f"{metrics['ticks']} ticks over {metrics['duration']:g} s")
    click.echo(f"mean forward speed {metrics['mean_forward_speed']:.4f} m/s")
    worst = metrics["max_error_joint"]
    click.echo(f"worst joint {worst}: max error "
               f"{metrics['per_joint'][worst]['max_error']:.6f} rad")
    if out is not None:
        Path(out).write_text(log.to_csv())
        click.echo(f"wrote {out} ({metrics['ticks']} rows)")


@cli.group()
def motion():
    """Stored keyframe motions."""


@motion.command("play")
@click.argument("file")
@click.option("--csv", "as_csv", is_flag=True,
              help="Print the sampled trajectory as CSV instead of a summary.")
def motion_play(file, as_csv):
    """Sample a motion at 100 Hz through the interpolator."""
    mot = load_motion(_resolve_motion(file))
    dt = 0.01
    samples = list(play(mot, dt, itertools.repeat((0.0, 0.0))))
    if not as_csv:
        duration = mot.keyframes[-1].time
        click.echo(f"motion {mot.name}: {len(mot.keyframes)} keyframes, "
                   f"{len(mot.joints)} joints, {duration:g} s")
        click.echo(f"sampled {len(samples)} ticks at {1 / dt:g} Hz")
        return
    joints = list(mot.joints)
    header = ["time", "support"]
    header += [f"pos_{j}" for j in joints]
    header += [f"vel_{j}" for j in joints]
    click.echo(",".join(header))
    for s in samples:
        row = ["%.10g" % s.time, s.support]
        row += ["%.10g" % s.positions[j] for j in joints]
        row += ["%.10g" % s.velocities[j] for j in joints]
        click.echo(",".join(row))


@cli.group()
def vision():
    """Camera correction and calibration tools."""


@vision.command("maps")
@click.option("--camera", "camera_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Intrinsics/coeffs JSON file.")
def vision_maps(camera_file):
    """Build lens-correction lookup maps and report their coverage."""
    intrinsics, coeffs = camera_from_file(camera_file)
    maps = build_undistort_maps(intrinsics, coeffs)
    h, w = intrinsics.height, intrinsics.width
    click.echo(f"camera {w}x{h} fx={intrinsics.fx:g} fy={intrinsics.fy:g} "
               f"k1={coeffs.k1:g} k2={coeffs.k2:g}")
    src_valid = np.isfinite(maps.source_x).mean()
    pt_valid = np.isfinite(maps.point_x).mean()
    u, v = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    shift = np.hypot(maps.point_x - u, maps.point_y - v)
    click.echo(f"source map valid on {100 * src_valid:.1f}% of output pixels")
    click.echo(f"point map valid on {100 * pt_valid:.1f}% of input pixels")
    click.echo(f"max rectification shift {np.nanmax(shift):.1f} px")


@vision.command("calib")
@click.argument("observations", type=click.Path(exists=True, dir_okay=False))
@click.option("--camera", "camera_file", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Intrinsics/coeffs JSON file.")
def vision_calib(observations, camera_file):
    """Fit the camera mounting pose from a landmark observation file.

    The file holds either a JSON array of observations or an object with
    "observations" plus optional "initial" pose and "trunk_height". Each
    observation has "pixel" [u, v], "ground" [x, y] and "q", the joint
    angles at capture (name-to-angle object or full array).
    """
    intrinsics, coeffs = camera_from_file(camera_file)
    model = load_model(default_model_path())
    doc = json.loads(Path(observations).read_text())
    if isinstance(doc, dict):
        entries = doc["observations"]
        initial = CameraPose(
            position=tuple(doc.get("initial", {}).get("position", (0.0, 0.0, 0.0))),
            rpy=tuple(doc.get("initial", {}).get("rpy", (0.0, 0.0, 0.0))),
        )
        trunk_height = float(doc.get("trunk_height", 1.0))
    else:
        entries = doc
        initial = CameraPose()
        trunk_height = 1.0
    obs = []
    for entry in entries:
        q = entry["q"]
        q = model.q_from_dict(q) if isinstance(q, dict) else np.asarray(q, dtype=float)
        obs.append(LandmarkObservation(pixel=tuple(entry["pixel"]),
                                       ground=tuple(entry["ground"]), q=q))
    result = calibrate_extrinsics(obs, model, initial, intrinsics, coeffs,
                                  trunk_height=trunk_height)
    click.echo(f"observations: {len(obs)}")
    click.echo(f"rms before {result.rms_before:.6f} m, after {result.rms_after:.6f} m")
    pos = result.pose.position
    rpy = result.pose.rpy
    click.echo(f"position {pos[0]:.6f} {pos[1]:.6f} {pos[2]:.6f} m")
    click.echo(f"rpy {rpy[0]:.6f} {rpy[1]:.6f} {rpy[2]:.6f} rad")
    click.echo(f"converged: {'yes' if result.converged else 'no'} "
               f"({result.n_evals} evaluations)")


@cli.group()
def model():
    """Robot model files."""


@model.command("check")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def model_check(file):
    """Validate a model file and report its size."""
    robot = load_model(file)
    click.echo(f"OK, {len(robot.joint_names)} DOF / {len(robot.actuators)} actuators")


@cli.group()
def bus():
    """Servo bus utilities."""


@bus.command("decode")
@click.argument("hexfile", type=click.Path(exists=True, dir_okay=False))
def bus_decode(hexfile):
    """Decode a bus log: hex lines, one packet per line."""
    for lineno, line in enumerate(Path(hexfile).read_text().splitlines(), 1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            data = bytes.fromhex(text)
        except ValueError:
            click.echo(f"{lineno}: not hex")
            continue
        shown = False
        for offset, item in scan_stream(data):
            shown = True
            if isinstance(item, Exception):
                click.echo(f"{lineno}: checksum error at byte {offset}")
                continue
            click.echo(f"{lineno}: id={item.id} {_describe_packet(item)}")
        if not shown:
            click.echo(f"{lineno}: no complete packet")


def _describe_packet(packet) -> str:
    p = packet.params
    if packet.instruction == INSTR_PING:
        return "ping"
    if packet.instruction == INSTR_READ and len(p) == 2:
        return f"read addr={p[0]} count={p[1]}"
    if packet.instruction == INSTR_WRITE and len(p) >= 1:
        return f"write addr={p[0]} data={p[1:].hex()}"
    if packet.instruction == INSTR_SYNC_WRITE and len(p) >= 2 and p[1] > 0:
        rows = (len(p) - 2) // (p[1] + 1)
        return f"sync_write addr={p[0]} width={p[1]} rows={rows}"
    return f"instr=0x{packet.instruction:02x} params={p.hex()}"


@cli.command("serve")
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(port, host):
    """Run the trajectory editor service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(host=host, port=port)
    uvicorn.run(create_app(config), host=config.host, port=config.port)


def dispatch(argv=None) -> int:
    """Run the CLI on argv, mapping outcomes onto process exit codes."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as stop:
        return int(stop.exit_code)
    except click.UsageError as err:
        err.show()
        return 1
    except click.ClickException as err:
        err.show()
        return 2
    except (KeyboardInterrupt, BrokenPipeError):
        return 2
    except Exception as err:  # runtime failures keep a one-line message
        click.echo(f"error: {err}", err=True)
        return 2
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
