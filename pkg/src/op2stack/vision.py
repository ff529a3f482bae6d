"""Wide-angle camera pipeline on synthetic data.

Covers the lens model (radial-tangential polynomial distortion with a damped
Newton-Raphson inverse), per-pixel undistortion lookup tables, area-average
downscaling, HSV conversion, pixel-to-ground projection through the kinematic
chain, and extrinsic calibration by a Nelder-Mead search over the camera
mounting pose.

Conventions: normalized image coordinates are (x right, y down) on the plane
z=1 of the optical frame. The optical frame maps into the robot's body
convention (x forward, y left, z up) through OPTICAL_TO_BODY. Camera mounting
(extrinsics) is expressed relative to the head link; world rays come from
trunk orientation (fused angles) and trunk height above the ground plane z=0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .geometry import rot_x, rot_y, rot_z
from .model import RobotModel, forward_kinematics
from .orientation import FusedAngles, fused_to_quat
from .geometry import quat_to_matrix

__all__ = [
    "VisionError",
    "UndistortError",
    "NoGroundIntersection",
    "CameraIntrinsics",
    "DistortionCoeffs",
    "CameraPose",
    "UndistortMaps",
    "LandmarkObservation",
    "NelderMeadResult",
    "CalibrationResult",
    "OPTICAL_TO_BODY",
    "distort_points",
    "undistort_point",
    "undistort_points",
    "build_undistort_maps",
    "apply_maps",
    "lookup_undistorted",
    "downscale",
    "rgb_to_hsv",
    "project_to_ground",
    "pixel_from_ground",
    "camera_pose_in_trunk",
    "nelder_mead",
    "calibrate_extrinsics",
    "read_pnm",
    "write_pnm",
]


class VisionError(ValueError):
    pass


class UndistortError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"undistortion did not converge, residual {residual:.3e}")
        self.residual = residual


class NoGroundIntersection(RuntimeError):
    pass


# optical (x right, y down, z forward) -> body (x forward, y left, z up)
OPTICAL_TO_BODY = np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
])


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    fov_diag_deg: float = 150.0  # informational

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise VisionError("focal lengths must be positive")
        if not (0.0 < self.cx < self.width and 0.0 < self.cy < self.height):
            raise VisionError("principal point must lie inside the image")

    def normalize(self, pixels: np.ndarray) -> np.ndarray:
        pixels = np.asarray(pixels, dtype=float)
        return np.stack([(pixels[..., 0] - self.cx) / self.fx,
                         (pixels[..., 1] - self.cy) / self.fy], axis=-1)

    def denormalize(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([pts[..., 0] * self.fx + self.cx,
                         pts[..., 1] * self.fy + self.cy], axis=-1)


@dataclass(frozen=True)
class DistortionCoeffs:
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "p1", "p2"):
            if not math.isfinite(getattr(self, name)):
                raise VisionError(f"distortion coefficient {name} must be finite")


@dataclass(frozen=True)
class CameraPose:
    """Camera mounting: position and roll/pitch/yaw, relative to a parent frame."""

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def rotation(self) -> np.ndarray:
        r, p, y = self.rpy
        return rot_z(y) @ rot_y(p) @ rot_x(r)

    def as_vector(self) -> np.ndarray:
        return np.array([*self.position, *self.rpy], dtype=float)

    @classmethod
    def from_vector(cls, v) -> "CameraPose":
        v = np.asarray(v, dtype=float)
        return cls(position=(v[0], v[1], v[2]), rpy=(v[3], v[4], v[5]))


@dataclass(frozen=True)
class LandmarkObservation:
    pixel: tuple[float, float]
    ground: tuple[float, float]  # known point on z=0, trunk frame
    q: np.ndarray  # serial joint state at capture


def distort_points(pts: np.ndarray, coeffs: DistortionCoeffs) -> np.ndarray:
    """Forward lens model on normalized points: radial polynomial plus
    tangential terms."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[..., 0], pts[..., 1]
    r2 = x * x + y * y
    scale = 1.0 + r2 * (coeffs.k1 + r2 * (coeffs.k2 + r2 * coeffs.k3))
    xd = x * scale + 2.0 * coeffs.p1 * x * y + coeffs.p2 * (r2 + 2.0 * x * x)
    yd = y * scale + coeffs.p1 * (r2 + 2.0 * y * y) + 2.0 * coeffs.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def _distort_jacobian(x, y, coeffs):
    """2x2 Jacobian blocks of the forward model, vectorized."""
    r2 = x * x + y * y
    scale = 1.0 + r2 * (coeffs.k1 + r2 * (coeffs.k2 + r2 * coeffs.k3))
    dscale = coeffs.k1 + r2 * (2.0 * coeffs.k2 + 3.0 * coeffs.k3 * r2)
    jxx = scale + 2.0 * x * x * dscale + 2.0 * coeffs.p1 * y + 6.0 * coeffs.p2 * x
    jxy = 2.0 * x * y * dscale + 2.0 * coeffs.p1 * x + 2.0 * coeffs.p2 * y
    jyy = scale + 2.0 * y * y * dscale + 6.0 * coeffs.p1 * y + 2.0 * coeffs.p2 * x
    return jxx, jxy, jyy


def undistort_points(
    pts: np.ndarray,
    coeffs: DistortionCoeffs,
    tol: float = 1e-10,
    max_iter: int = 20,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch Newton-Raphson inversion of distort_points.

    Returns (solutions, residuals, converged mask); callers that need a hard
    failure use undistort_point. Steps that would increase the residual are
    halved (damping), which keeps mildly out-of-range points from diverging.
    """
    if tol <= 0.0:
        raise VisionError("tol must be > 0")
    target = np.asarray(pts, dtype=float)
    shape = target.shape
    target = target.reshape(-1, 2)
    cur = target.copy()

    def residual_of(p):
        return distort_points(p, coeffs) - target

    res = residual_of(cur)
    res_norm = np.max(np.abs(res), axis=-1)
    for _ in range(max_iter):
        active = res_norm > tol
        if not np.any(active):
            break
        x, y = cur[active, 0], cur[active, 1]
        jxx, jxy, jyy = _distort_jacobian(x, y, coeffs)
        det = jxx * jyy - jxy * jxy
        det = np.where(np.abs(det) < 1e-300, np.copysign(1e-300, det), det)
        rx, ry = res[active, 0], res[active, 1]
        dx = (jyy * rx - jxy * ry) / det
        dy = (jxx * ry - jxy * rx) / det
        step = np.stack([dx, dy], axis=-1)
        trial = cur[active] - step
        trial_res = distort_points(trial, coeffs) - target[active]
        trial_norm = np.max(np.abs(trial_res), axis=-1)
        # damped update: halve the step while it makes things worse
        for _ in range(8):
            worse = trial_norm > res_norm[active]
            if not np.any(worse):
                break
            step[worse] *= 0.5
            trial[worse] = cur[active][worse] - step[worse]
            trial_res[worse] = distort_points(trial[worse], coeffs) - target[active][worse]
            trial_norm[worse] = np.max(np.abs(trial_res[worse]), axis=-1)
        cur[active] = trial
        res[active] = trial_res
        res_norm[active] = trial_norm
    converged = res_norm <= tol
    return cur.reshape(shape), res_norm.reshape(shape[:-1]), converged.reshape(shape[:-1])


def undistort_point(
    pt,
    coeffs: DistortionCoeffs,
    tol: float = 1e-10,
    max_iter: int = 20,
) -> np.ndarray:
    sol, res, ok = undistort_points(np.asarray(pt, dtype=float), coeffs, tol, max_iter)
    if not np.all(ok):
        raise UndistortError(float(np.max(res)))
    return sol


@dataclass(frozen=True)
class UndistortMaps:
    """Lookup tables for real-time lens correction.

    source_x/source_y: for every pixel of the rectified output image, the
    sub-pixel source location in the distorted input (NaN where the source
    falls outside the input, which happens at the corners).
    point_x/point_y: the dual direction, for measurements: for every pixel of
    the distorted input, its rectified location (NaN where the Newton
    inversion failed).
    """

    intrinsics: CameraIntrinsics
    source_x: np.ndarray
    source_y: np.ndarray
    point_x: np.ndarray
    point_y: np.ndarray

    def __post_init__(self):
        h, w = self.intrinsics.height, self.intrinsics.width
        for arr in (self.source_x, self.source_y, self.point_x, self.point_y):
            if arr.shape != (h, w):
                raise VisionError("map tables must match the camera resolution")


def build_undistort_maps(
    intrinsics: CameraIntrinsics,
    coeffs: DistortionCoeffs,
    tol: float = 1e-10,
    max_iter: int = 20,
) -> UndistortMaps:
    w, h = intrinsics.width, intrinsics.height
    u, v = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    grid = np.stack([u, v], axis=-1)
    norm = intrinsics.normalize(grid)

    # rectified output pixel -> source pixel in the distorted image
    src = intrinsics.denormalize(distort_points(norm, coeffs))
    sx, sy = src[..., 0].copy(), src[..., 1].copy()
    outside = (sx < 0.0) | (sx > w - 1.0) | (sy < 0.0) | (sy > h - 1.0)
    sx[outside] = np.nan
    sy[outside] = np.nan

    # distorted input pixel -> rectified location
    undist, _, ok = undistort_points(norm, coeffs, tol, max_iter)
    pts = intrinsics.denormalize(undist)
    px, py = pts[..., 0].copy(), pts[..., 1].copy()
    px[~ok] = np.nan
    py[~ok] = np.nan

    return UndistortMaps(intrinsics=intrinsics, source_x=sx, source_y=sy,
                         point_x=px, point_y=py)


def apply_maps(maps: UndistortMaps, image: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Rectify an image by bilinear sampling at the stored source locations."""
    h, w = maps.intrinsics.height, maps.intrinsics.width
    if image.shape[:2] != (h, w):
        raise VisionError("image does not match the camera resolution")
    sx, sy = maps.source_x, maps.source_y
    valid = np.isfinite(sx) & np.isfinite(sy)
    x = np.where(valid, sx, 0.0)
    y = np.where(valid, sy, 0.0)
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2)
    fx = x - x0
    fy = y - y0
    if image.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    img = image.astype(float)
    out = (img[y0, x0] * (1 - fx) * (1 - fy)
           + img[y0, x0 + 1] * fx * (1 - fy)
           + img[y0 + 1, x0] * (1 - fx) * fy
           + img[y0 + 1, x0 + 1] * fx * fy)
    if image.ndim == 3:
        out[~valid] = fill
    else:
        out = np.where(valid, out, fill)
    return out


def lookup_undistorted(maps: UndistortMaps, pixels: np.ndarray) -> np.ndarray:
    """Rectified location of arbitrary distorted-image points by bilinear
    interpolation of the point tables."""
    pts = np.asarray(pixels, dtype=float)
    flat = pts.reshape(-1, 2)
    h, w = maps.intrinsics.height, maps.intrinsics.width
    x = np.clip(flat[:, 0], 0.0, w - 1.0)
    y = np.clip(flat[:, 1], 0.0, h - 1.0)
    x0 = np.clip(np.floor(x).astype(int), 0, w - 2)
    y0 = np.clip(np.floor(y).astype(int), 0, h - 2)
    fx = (x - x0)[:, None]
    fy = (y - y0)[:, None]
    tables = np.stack([maps.point_x, maps.point_y], axis=-1)
    out = (tables[y0, x0] * (1 - fx) * (1 - fy)
           + tables[y0, x0 + 1] * fx * (1 - fy)
           + tables[y0 + 1, x0] * (1 - fx) * fy
           + tables[y0 + 1, x0 + 1] * fx * fy)
    return out.reshape(pts.shape)


def downscale(image: np.ndarray, factor: float = 2.5) -> np.ndarray:
    """Area-average resampling by a rational shrink factor."""
    if factor <= 1.0:
        raise VisionError("factor must be > 1")
    frac = Fraction(factor).limit_denominator(8)
    p, q = frac.numerator, frac.denominator
    if abs(float(frac) - factor) > 1e-12 or p > 64:
        raise VisionError(f"unsupported downscale factor {factor}")
    h, w = image.shape[:2]
    if (h * q) % p or (w * q) % p:
        raise VisionError(f"dimensions {w}x{h} not divisible for factor {p}/{q}")
    out_h, out_w = h * q // p, w * q // p
    img = image.astype(float)
    # exact area average: split each pixel into q x q subcells, then box-sum
    # blocks of p x p subcells
    fine = np.repeat(np.repeat(img, q, axis=0), q, axis=1)
    shape = (out_h, p, out_w, p) + fine.shape[2:]
    return fine.reshape(shape).mean(axis=(1, 3))


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone HSV with hue in degrees [0, 360); channels in [0, 1]."""
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = np.max(rgb, axis=-1)
    c = v - np.min(rgb, axis=-1)
    s = np.where(v > 0.0, c / np.where(v > 0.0, v, 1.0), 0.0)
    safe_c = np.where(c > 0.0, c, 1.0)
    h = np.zeros_like(v)
    h = np.where((c > 0.0) & (v == r), np.mod((g - b) / safe_c, 6.0), h)
    h = np.where((c > 0.0) & (v == g) & (v != r), (b - r) / safe_c + 2.0, h)
    h = np.where((c > 0.0) & (v == b) & (v != r) & (v != g), (r - g) / safe_c + 4.0, h)
    return np.stack([h * 60.0, s, v], axis=-1)


def camera_pose_in_trunk(model: RobotModel, q: np.ndarray, mounting: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """Camera position and rotation in the trunk frame: head FK composed with
    the mounting pose. Rotation maps optical coordinates to trunk."""
    fk = forward_kinematics(model, q)
    head_pos = fk.position("head")
    head_rot = fk.rotation("head")
    pos = head_pos + head_rot @ np.asarray(mounting.position, dtype=float)
    rot = head_rot @ mounting.rotation() @ OPTICAL_TO_BODY
    return pos, rot


def _world_ray(pixel, intrinsics, coeffs, cam_pos, cam_rot, trunk_fused, trunk_height):
    norm = intrinsics.normalize(np.asarray(pixel, dtype=float))
    und = undistort_point(norm, coeffs)
    ray_opt = np.array([und[0], und[1], 1.0])
    trunk_rot = quat_to_matrix(fused_to_quat(trunk_fused))
    origin = np.array([0.0, 0.0, trunk_height]) + trunk_rot @ cam_pos
    direction = trunk_rot @ cam_rot @ ray_opt
    return origin, direction


def project_to_ground(
    pixel,
    intrinsics: CameraIntrinsics,
    coeffs: DistortionCoeffs,
    cam_pos: np.ndarray,
    cam_rot: np.ndarray,
    trunk_fused: FusedAngles,
    trunk_height: float,
) -> np.ndarray:
    """Pixel -> egocentric (x, y) on the ground plane z=0.

    cam_pos/cam_rot place the camera in the trunk frame (see
    camera_pose_in_trunk); the trunk sits trunk_height above the ground with
    the given fused orientation.
    """
    origin, direction = _world_ray(pixel, intrinsics, coeffs, cam_pos, cam_rot,
                                   trunk_fused, trunk_height)
    if direction[2] >= -1e-12:
        raise NoGroundIntersection("view ray does not descend toward the ground")
    t = -origin[2] / direction[2]
    if t <= 0.0:
        raise NoGroundIntersection("ground intersection behind the camera")
    hit = origin + t * direction
    return hit[:2]


def pixel_from_ground(
    ground_xy,
    intrinsics: CameraIntrinsics,
    coeffs: DistortionCoeffs,
    cam_pos: np.ndarray,
    cam_rot: np.ndarray,
    trunk_fused: FusedAngles,
    trunk_height: float,
) -> np.ndarray:
    """Inverse of project_to_ground: render a ground point into the distorted
    image (used by the synthetic test scenes)."""
    trunk_rot = quat_to_matrix(fused_to_quat(trunk_fused))
    origin = np.array([0.0, 0.0, trunk_height]) + trunk_rot @ cam_pos
    world = np.array([ground_xy[0], ground_xy[1], 0.0])
    optical = (trunk_rot @ cam_rot).T @ (world - origin)
    if optical[2] <= 1e-9:
        raise NoGroundIntersection("point behind the camera")
    norm = optical[:2] / optical[2]
    return intrinsics.denormalize(distort_points(norm, coeffs))


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_evals: int
    converged: bool


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    step: float | np.ndarray = 0.1,
    xtol: float = 1e-9,
    ftol: float = 1e-12,
    max_evals: int = 2000,
) -> NelderMeadResult:
    """Downhill simplex search: reflect, expand, contract, shrink."""
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    step = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    simplex = [x0.copy()]
    for i in range(n):
        v = x0.copy()
        v[i] += step[i] if step[i] != 0.0 else 0.1
        simplex.append(v)
    simplex = np.array(simplex)
    evals = 0

    def call(x):
        nonlocal evals
        evals += 1
        return float(f(x))

    values = np.array([call(v) for v in simplex])
    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5

    while evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex = simplex[order]
        values = values[order]
        # Both spreads must collapse: an f-spread check alone fires early
        # when vertices straddle a minimum symmetrically.
        if (values[-1] - values[0] <= ftol
                and np.max(np.abs(simplex[1:] - simplex[0])) <= xtol):
            return NelderMeadResult(simplex[0], values[0], evals, True)
        centroid = simplex[:-1].mean(axis=0)
        reflected = centroid + alpha * (centroid - simplex[-1])
        f_r = call(reflected)
        if values[0] <= f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
            continue
        if f_r < values[0]:
            expanded = centroid + gamma * (reflected - centroid)
            f_e = call(expanded)
            if f_e < f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
            continue
        contracted = centroid + rho * (simplex[-1] - centroid)
        f_c = call(contracted)
        if f_c < values[-1]:
            simplex[-1], values[-1] = contracted, f_c
            continue
        for i in range(1, n + 1):
            simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
            values[i] = call(simplex[i])
    order = np.argsort(values, kind="stable")
    return NelderMeadResult(simplex[order[0]], values[order[0]], evals, False)


@dataclass(frozen=True)
class CalibrationResult:
    pose: CameraPose
    rms_before: float
    rms_after: float
    converged: bool
    n_evals: int


def calibrate_extrinsics(
    observations: Sequence[LandmarkObservation],
    model: RobotModel,
    initial: CameraPose,
    intrinsics: CameraIntrinsics,
    coeffs: DistortionCoeffs,
    trunk_fused: FusedAngles = FusedAngles(0.0, 0.0, 0.0),
    trunk_height: float = 1.0,
    max_evals: int = 4000,
) -> CalibrationResult:
    """Fit the 6-parameter camera mounting pose that best explains the
    landmark observations, via restarted Nelder-Mead on the mean squared
    ground-projection error."""
    if len(observations) < 6:
        raise VisionError("need at least 6 observations")

    # Everything that does not depend on the candidate pose is precomputed:
    # head FK per observation and the undistorted optical ray per pixel.
    n = len(observations)
    head_pos = np.empty((n, 3))
    head_rot = np.empty((n, 3, 3))
    rays_opt = np.empty((n, 3))
    grounds = np.empty((n, 2))
    for i, obs in enumerate(observations):
        fk = forward_kinematics(model, obs.q)
        head_pos[i] = fk.position("head")
        head_rot[i] = fk.rotation("head")
        und = undistort_point(intrinsics.normalize(np.asarray(obs.pixel, float)), coeffs)
        rays_opt[i] = (und[0], und[1], 1.0)
        grounds[i] = obs.ground
    trunk_rot = quat_to_matrix(fused_to_quat(trunk_fused))
    world_head_rot = trunk_rot @ head_rot  # (n, 3, 3)
    world_head_pos = np.array([0.0, 0.0, trunk_height]) + head_pos @ trunk_rot.T

    def rms(pose: CameraPose) -> float:
        mount = pose.rotation() @ OPTICAL_TO_BODY
        dirs = world_head_rot @ (mount @ rays_opt[..., None])
        dirs = dirs[..., 0]
        origins = world_head_pos + (world_head_rot @ np.asarray(pose.position))
        dz = dirs[:, 2]
        if np.any(dz >= -1e-12):
            return 1e6
        t = -origins[:, 2] / dz
        if np.any(t <= 0.0):
            return 1e6
        hits = origins[:, :2] + t[:, None] * dirs[:, :2]
        return math.sqrt(float(np.mean(np.sum((hits - grounds) ** 2, axis=1))))

    def cost(v: np.ndarray) -> float:
        return rms(CameraPose.from_vector(v)) ** 2

    rms_before = rms(initial)
    x = initial.as_vector()
    steps = (np.array([0.02, 0.02, 0.02, 0.03, 0.03, 0.03]),
             np.array([0.004, 0.004, 0.004, 0.006, 0.006, 0.006]),
             np.array([0.0008, 0.0008, 0.0008, 0.0012, 0.0012, 0.0012]))
    evals = 0
    converged = True
    for step in steps:
        result = nelder_mead(cost, x, step=step, xtol=1e-12, ftol=1e-18,
                             max_evals=max_evals)
        x = result.x
        evals += result.n_evals
        converged = converged and result.converged
    pose = CameraPose.from_vector(x)
    return CalibrationResult(pose=pose, rms_before=rms_before, rms_after=rms(pose),
                             converged=converged, n_evals=evals)


def read_pnm(path: str | Path) -> np.ndarray:
    """Binary PGM (P5) or PPM (P6), maxval 255, as floats in [0, 1]."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise VisionError("truncated PNM header")
        fields.append(data[start:pos])
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise VisionError(f"unsupported PNM magic {magic!r}")
    if maxval != 255:
        raise VisionError("only maxval 255 supported")
    pos += 1  # single whitespace after maxval
    channels = 1 if magic == b"P5" else 3
    need = w * h * channels
    raw = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    if raw.size != need:
        raise VisionError("truncated PNM payload")
    img = raw.astype(float) / 255.0
    return img.reshape(h, w) if channels == 1 else img.reshape(h, w, 3)


def write_pnm(path: str | Path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        magic, (h, w) = b"P5", img.shape
    elif img.ndim == 3 and img.shape[2] == 3:
        magic, (h, w) = b"P6", img.shape[:2]
    else:
        raise VisionError("image must be (h, w) gray or (h, w, 3) color")
    payload = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8).tobytes()
    Path(path).write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + payload)
