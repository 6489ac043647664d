"""Embedded checks run by ``mutloc selftest``."""

from __future__ import annotations

import os

import numpy as np

from .geometry import CameraIntrinsics, Pose, rot_y, rotation_error_deg, translation_error
from .polysolve import real_roots, resultant_quadratics, resultant_quartic_quadratic
from .simulator import random_scene
from .solver import RigConfig, SolverOptions, render_observation, solve_mutual_pose

ROUNDTRIP_SCENES = 100
ROUNDTRIP_TRANS_TOL = 1e-5
ROUNDTRIP_ROT_TOL = 1e-4


class CheckFailed(AssertionError):
    pass


def _options_from_env() -> SolverOptions:
    kw = {}
    for env, key in (("MUTLOC_SELFTEST_IMAG_TOL", "imag_tol"),
                     ("MUTLOC_SELFTEST_RESIDUAL_TOL", "residual_tol")):
        if env in os.environ:
            kw[key] = float(os.environ[env])
    return SolverOptions(**kw)


def check_resultant_quadratics(opts):
    res = resultant_quadratics([[-1.0], [0.0], [1.0]], [[-4.0], [0.0], [1.0]])
    if abs(res(0.0, 0.0) - 9.0) > 1e-12:
        raise CheckFailed(f"Res(s^2-1, s^2-4) = {res(0.0, 0.0)}, expected 9")
    shared = resultant_quadratics([[2.0], [-3.0], [1.0]], [[5.0], [-6.0], [1.0]])
    if abs(shared(0.0, 0.0)) > 1e-12:
        raise CheckFailed("resultant of quadratics sharing a root is nonzero")


def check_resultant_quartic_quadratic(opts):
    res = resultant_quartic_quadratic([[0.0], [0.0], [0.0], [0.0], [1.0]], [[-1.0], [0.0], [1.0]])
    if abs(res(0.0) - 1.0) > 1e-12:
        raise CheckFailed(f"Res(s^4, s^2-1) = {res(0.0)}, expected 1")
    # product-of-evaluations identity for a monic quadratic with roots a, b
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = rng.uniform(-2, 2, 5)
        a, b = rng.uniform(-2, 2, 2)
        g = [a * b, -(a + b), 1.0]
        expected = np.polyval(r[::-1], a) * np.polyval(r[::-1], b)
        got = resultant_quartic_quadratic([[c] for c in r], [[c] for c in g])(0.0)
        if abs(got - expected) > 1e-9 * max(1.0, abs(expected)):
            raise CheckFailed(f"quartic/quadratic resultant {got} != {expected}")


def check_real_roots(opts):
    coeffs = np.polynomial.polynomial.polyfromroots(np.arange(1.0, 9.0))
    roots = real_roots(coeffs, opts.imag_tol).real_roots
    if roots.size != 8 or np.max(np.abs(roots - np.arange(1.0, 9.0))) > 1e-6:
        raise CheckFailed(f"roots of (s-1)...(s-8) recovered as {roots}")


def check_facing_cameras(opts):
    K = CameraIntrinsics(500.0, 500.0, 480.0, 270.0)
    rig = RigConfig(K, K, [0.1, 0, 0], [-0.1, 0, 0], [0.1, 0, 0], [-0.1, 0, 0])
    pose = Pose(rot_y(180.0), [0.0, 0.0, 2.0])
    est = solve_mutual_pose(rig, render_observation(rig, pose), opts).best.pose
    te = translation_error(pose.translation, est.translation)
    re = rotation_error_deg(pose.rotation, est.rotation)
    if te > 1e-6 or re > 1e-5:
        raise CheckFailed(f"facing cameras recovered with {te:.3g} m / {re:.3g} deg error")


def check_zero_noise_roundtrip(opts):
    rng = np.random.default_rng(2013)
    for i in range(ROUNDTRIP_SCENES):
        rig, pose = random_scene(rng)
        try:
            est = solve_mutual_pose(rig, render_observation(rig, pose), opts).best.pose
        except Exception as exc:
            raise CheckFailed(f"scene {i}: {type(exc).__name__}: {exc}") from exc
        te = translation_error(pose.translation, est.translation)
        re = rotation_error_deg(pose.rotation, est.rotation)
        if te > ROUNDTRIP_TRANS_TOL or re > ROUNDTRIP_ROT_TOL:
            raise CheckFailed(f"scene {i}: error {te:.3g} m / {re:.3g} deg")


CHECKS = [
    ("resultant_quadratics", check_resultant_quadratics),
    ("resultant_quartic_quadratic", check_resultant_quartic_quadratic),
    ("real_roots", check_real_roots),
    ("facing_cameras", check_facing_cameras),
    ("zero_noise_roundtrip", check_zero_noise_roundtrip),
]


def run_selftest(opts: SolverOptions = None):
    """Run every check; return ``(name, message)`` of the first failure or ``None``."""
    opts = opts or _options_from_env()
    for name, check in CHECKS:
        try:
            check(opts)
        except Exception as exc:
            return name, str(exc)
    return None
