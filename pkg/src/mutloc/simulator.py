"""Synthetic scenes, pixel noise and Monte-Carlo noise sweeps."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MarkerNotVisible, MutlocError, NonPositiveDepth
from .geometry import (
    CameraIntrinsics,
    Pose,
    rot_y,
    rotation_error_deg,
    translation_error,
)
from .solver import (
    ObservationPair,
    RigConfig,
    SolverOptions,
    render_observation,
    solve_mutual_pose,
)

log = logging.getLogger(__name__)

IMAGE_SIZE = (960, 540)
TRIAL_FIELDS = ["sigma", "trial", "success", "trans_err_m", "rot_err_deg", "raw_roots", "filtered_roots"]
SUMMARY_FIELDS = [
    "sigma", "trials", "successes",
    "median_trans_err_m", "iqr_trans_err_m",
    "median_rot_err_deg", "iqr_rot_err_deg",
]


# stock Blender camera (35 mm lens on a 32 mm sensor) rendered 960 px wide
BLENDER_FX = 960 * 35.0 / 32.0


def default_intrinsics(image_size=IMAGE_SIZE, fx: float = 500.0) -> CameraIntrinsics:
    w, h = image_size
    return CameraIntrinsics(fx, fx, w / 2.0, h / 2.0)


def default_rig(intrinsics: Optional[CameraIntrinsics] = None, half_span: float = 0.2) -> RigConfig:
    """Symmetric rig: two markers per robot, ``half_span`` to either side, slightly raised."""
    K = intrinsics or default_intrinsics()
    return RigConfig(
        K, K,
        q1=[half_span, -0.05, 0.0], q2=[-half_span, -0.05, 0.0],
        p3=[half_span, -0.05, 0.0], p4=[-half_span, -0.05, 0.0],
    )


def facing_pose(distance: float, yaw_deg: float = 0.0, lateral: float = 0.0) -> Pose:
    """Camera q ``distance`` ahead of camera p, turned around to face it.

    ``yaw_deg`` turns camera q about the vertical axis away from exact
    facing and ``lateral`` shifts it sideways, both in frame {p}.
    """
    R = rot_y(180.0 + yaw_deg)
    center_q_in_p = np.array([lateral, 0.0, distance])
    return Pose(R, -R @ center_q_in_p)


@dataclass(frozen=True)
class ScenarioSpec:
    rig: RigConfig
    pose_gt: Pose
    image_size: tuple = IMAGE_SIZE
    noise_sigma: float = 0.0
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.noise_sigma >= 0.0:
            raise ValueError("noise_sigma must be non-negative")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def sweep_scenario(**overrides) -> ScenarioSpec:
    """Noise study scene: 960x540 renders from a stock Blender camera, ~1 m separation."""
    rig = default_rig(default_intrinsics(IMAGE_SIZE, BLENDER_FX))
    spec = ScenarioSpec(rig, facing_pose(1.0, yaw_deg=5.0, lateral=0.05), IMAGE_SIZE)
    return replace(spec, **overrides)


def operating_point_scenario(**overrides) -> ScenarioSpec:
    """2 m separation seen by fx=500 cameras at 960x540 with 1 px noise."""
    spec = ScenarioSpec(default_rig(), facing_pose(2.0, yaw_deg=10.0, lateral=0.1), IMAGE_SIZE,
                        noise_sigma=1.0)
    return replace(spec, **overrides)


def check_visibility(rig: RigConfig, pose: Pose, image_size=IMAGE_SIZE) -> ObservationPair:
    """Noise-free observation, raising if any marker leaves the image."""
    try:
        obs = render_observation(rig, pose)
    except NonPositiveDepth as exc:
        raise MarkerNotVisible(str(exc)) from exc
    w, h = image_size
    for name in ("px_m1", "px_m2", "px_m3", "px_m4"):
        px = getattr(obs, name)
        if px is None:
            continue
        if not (0.0 <= px[0] <= w and 0.0 <= px[1] <= h):
            raise MarkerNotVisible(f"{name[3:]} projects to {px}, outside {w}x{h}")
    return obs


def trial_rng(seed: int, stream: int, trial: int) -> np.random.Generator:
    """Independent generator for one (seed, stream, trial) cell."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), (int(stream) << 32) | int(trial)]))


def simulate_observation(spec: ScenarioSpec, trial: int, stream: int = 0) -> ObservationPair:
    """Ground-truth projections plus i.i.d. gaussian pixel noise of ``spec.noise_sigma``."""
    clean = check_visibility(spec.rig, spec.pose_gt, spec.image_size)
    if spec.noise_sigma == 0.0:
        return clean
    rng = trial_rng(spec.seed, stream, trial)
    noise = rng.normal(0.0, spec.noise_sigma, size=(4, 2))
    return ObservationPair(
        clean.px_m1 + noise[0],
        clean.px_m2 + noise[1],
        clean.px_m3 + noise[2],
        clean.px_m4 + noise[3] if clean.has_m4 else None,
    )


@dataclass(frozen=True)
class TrialResult:
    noise_sigma: float
    trial: int
    success: bool
    translation_error: Optional[float] = None
    rotation_error: Optional[float] = None
    raw_roots: int = 0
    filtered_roots: int = 0
    error: Optional[str] = None

    def row(self) -> dict:
        return {
            "sigma": repr(float(self.noise_sigma)),
            "trial": self.trial,
            "success": int(self.success),
            "trans_err_m": "" if self.translation_error is None else repr(self.translation_error),
            "rot_err_deg": "" if self.rotation_error is None else repr(self.rotation_error),
            "raw_roots": self.raw_roots,
            "filtered_roots": self.filtered_roots,
        }


def run_trial(spec: ScenarioSpec, trial: int, stream: int = 0,
              opts: SolverOptions = SolverOptions()) -> TrialResult:
    obs = simulate_observation(spec, trial, stream)
    try:
        report = solve_mutual_pose(spec.rig, obs, opts)
    except MutlocError as exc:
        return TrialResult(spec.noise_sigma, trial, False, error=f"{type(exc).__name__}: {exc}")
    est = report.best.pose
    return TrialResult(
        spec.noise_sigma,
        trial,
        True,
        translation_error(spec.pose_gt.translation, est.translation),
        rotation_error_deg(spec.pose_gt.rotation, est.rotation),
        report.num_raw_roots,
        report.num_filtered_roots,
    )


def _run_cell(args):
    spec, trial, stream, opts = args
    return run_trial(spec, trial, stream, opts)


def run_noise_sweep(spec: ScenarioSpec, sigmas, opts: SolverOptions = SolverOptions(),
                    workers: int = 1) -> list:
    """Solve ``spec.trials`` noisy observations for every sigma.

    Trial ``i`` at sigma index ``k`` draws its noise from the stream keyed by
    ``(spec.seed, k, i)``, so the output does not depend on ``workers``.
    Failed solves are recorded, never raised.
    """
    sigmas = [float(s) for s in sigmas]
    if any(not s >= 0.0 for s in sigmas):
        raise ValueError("sigmas must be non-negative")
    check_visibility(spec.rig, spec.pose_gt, spec.image_size)
    cells = [
        (replace(spec, noise_sigma=s), i, k, opts)
        for k, s in enumerate(sigmas)
        for i in range(spec.trials)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_cell, cells, chunksize=16))
    return [_run_cell(c) for c in cells]


def summarize(results) -> list:
    """Per-sigma medians and interquartile ranges over successful trials."""
    by_sigma = {}
    for r in results:
        by_sigma.setdefault(r.noise_sigma, []).append(r)
    rows = []
    for sigma, rs in by_sigma.items():
        ok = [r for r in rs if r.success]
        te = np.array([r.translation_error for r in ok], dtype=float)
        re = np.array([r.rotation_error for r in ok], dtype=float)

        def stats(x):
            if x.size == 0:
                return float("nan"), float("nan")
            q1, med, q3 = np.percentile(x, [25, 50, 75])
            return float(med), float(q3 - q1)

        tm, tiqr = stats(te)
        rm, riqr = stats(re)
        rows.append({
            "sigma": sigma, "trials": len(rs), "successes": len(ok),
            "median_trans_err_m": tm, "iqr_trans_err_m": tiqr,
            "median_rot_err_deg": rm, "iqr_rot_err_deg": riqr,
        })
    return rows


def write_csvs(results, out_dir) -> tuple:
    """Write ``trials.csv`` and ``summary.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials_path = out / "trials.csv"
    summary_path = out / "summary.csv"
    with open(trials_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, TRIAL_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in results:
            w.writerow(r.row())
    with open(summary_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in summarize(results):
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return trials_path, summary_path


def _random_unit_in_cone(rng, half_angle: float) -> np.ndarray:
    cos_min = np.cos(half_angle)
    z = rng.uniform(cos_min, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    r = np.sqrt(1.0 - z * z)
    return np.array([r * np.cos(phi), r * np.sin(phi), z])


def _rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rotation taking unit vector ``a`` onto unit vector ``b`` (orthonormal to rounding)."""
    from scipy.spatial.transform import Rotation

    rot, _ = Rotation.align_vectors([b], [a])
    return rot.as_matrix()


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    from scipy.spatial.transform import Rotation

    return Rotation.from_rotvec(axis * angle).as_matrix()


def _random_offset(rng, lo: float, hi: float) -> np.ndarray:
    d = rng.normal(size=3)
    return d / np.linalg.norm(d) * rng.uniform(lo, hi)


def random_scene(rng: np.random.Generator, intrinsics: Optional[CameraIntrinsics] = None,
                 image_size=IMAGE_SIZE, distance=(0.5, 5.0), marker_offset=(0.05, 0.3),
                 min_pixel_separation: float = 5.0, max_tries: int = 1000):
    """Random rig and pose with all four markers inside both images.

    Each camera sits inside the other's field of view at a random range,
    with a random roll about the line joining them; markers are mounted at
    random directions ``marker_offset`` meters from their camera. Draws whose
    two markers land closer than ``min_pixel_separation`` in either image are
    rejected.

    Returns:
        ``(rig, pose)``.
    """
    K = intrinsics or default_intrinsics(image_size)
    w, h = image_size
    half_fov = 0.8 * np.arctan(min(w / (2 * K.fx), h / (2 * K.fy)))
    for _ in range(max_tries):
        u_p = _random_unit_in_cone(rng, half_fov)
        u_q = _random_unit_in_cone(rng, half_fov)
        R = _axis_rotation(-u_q, rng.uniform(0.0, 2.0 * np.pi)) @ _rotation_between(u_p, -u_q)
        pose = Pose(R, rng.uniform(*distance) * u_q)
        rig = RigConfig(
            K, K,
            _random_offset(rng, *marker_offset), _random_offset(rng, *marker_offset),
            _random_offset(rng, *marker_offset), _random_offset(rng, *marker_offset),
        )
        try:
            obs = check_visibility(rig, pose, image_size)
        except (MarkerNotVisible, ValueError):
            continue
        if (np.linalg.norm(obs.px_m1 - obs.px_m2) < min_pixel_separation
                or np.linalg.norm(obs.px_m3 - obs.px_m4) < min_pixel_separation):
            continue
        return rig, pose
    raise RuntimeError("could not draw a visible scene")
