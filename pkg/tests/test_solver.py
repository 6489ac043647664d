import numpy as np
import pytest

from mutloc.errors import DegenerateBearing, NoPositiveRoots, NoSolution
from mutloc.geometry import Pose, rot_y, rotation_error_deg, translation_error
from mutloc.simulator import random_scene
from mutloc.solver import (
    ObservationPair,
    RigConfig,
    ScaleTriple,
    SolverOptions,
    build_scale_system,
    filter_roots,
    render_observation,
    reprojection_cost,
    scale_polynomial,
    solve_mutual_pose,
    solve_scales,
    swap_roles,
)


def ground_truth_scales(rig, pose):
    R, t = pose.rotation, pose.translation
    return (
        np.linalg.norm(R.T @ (rig.q1 - t)),
        np.linalg.norm(R.T @ (rig.q2 - t)),
        np.linalg.norm(R @ rig.p3 + t),
    )


def assert_pose_close(est, gt, trans_tol, rot_tol):
    assert translation_error(gt.translation, est.translation) < trans_tol
    assert rotation_error_deg(gt.rotation, est.rotation) < rot_tol


def test_rig_invariants(K500):
    with pytest.raises(ValueError):
        RigConfig(K500, K500, [0.1, 0, 0], [0.1, 0, 0], [0.1, 0, 0])
    with pytest.raises(ValueError):
        RigConfig(K500, K500, [0.1, 0, 0], [-0.1, 0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        RigConfig(K500, K500, [0.1, 0, 0], [-0.1, 0, 0], [0.1, 0, 0], [0.1, 0, 0])


def test_orthogonal_bearings_reduce_first_equation(K500):
    rig = RigConfig(K500, K500, [0.3, 0, 0], [0, 0.4, 0], [0.1, 0, 0])
    # pixels 500 px left and right of center give bearings at +-45 deg, orthogonal
    obs = ObservationPair([-20, 270], [980, 270], [480, 270])
    system = build_scale_system(rig, obs)
    assert abs(system.cos12) < 1e-15
    eq12, _, _ = system.quadratics()
    np.testing.assert_allclose(eq12[1], [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(eq12[0], [-0.25, 0.0, 1.0])


def test_parallel_bearings_rejected(K500):
    rig = RigConfig(K500, K500, [0.1, 0, 0], [-0.1, 0, 0], [0.1, 0, 0])
    obs = ObservationPair([500, 300], [500, 300], [480, 270])
    with pytest.raises(DegenerateBearing):
        build_scale_system(rig, obs)


def test_ground_truth_zeroes_distance_equations(facing):
    rig, pose = facing
    system = build_scale_system(rig, render_observation(rig, pose))
    s = ground_truth_scales(rig, pose)
    np.testing.assert_allclose(system.residuals(*s), 0.0, atol=1e-9)
    # the same through the polynomial coefficient form
    eq12, eq23, eq31 = system.quadratics()
    pv = np.polynomial.polynomial.polyval
    assert abs(s[1] ** 2 + pv(s[0], eq12[1]) * s[1] + pv(s[0], eq12[0])) < 1e-9
    assert abs(s[1] ** 2 + pv(s[2], eq23[1]) * s[1] + pv(s[2], eq23[0])) < 1e-9
    assert abs(-s[2] ** 2 + pv(s[0], eq31[1]) * s[2] + pv(s[0], eq31[0])) < 1e-9
    poly, r = scale_polynomial(system)
    assert poly.degree <= 8
    assert abs(r(s[0], s[2])) < 1e-9 * r.norm_inf()


def test_solve_scales_contains_ground_truth(rng):
    for _ in range(50):
        rig, pose = random_scene(rng)
        triples = solve_scales(rig, render_observation(rig, pose))
        gt = np.array(ground_truth_scales(rig, pose))
        errs = [np.max(np.abs(t.as_array() - gt) / gt) for t in triples]
        assert min(errs) < 1e-7
        system = build_scale_system(rig, render_observation(rig, pose))
        scale = system.scene_scale(gt)
        for t in triples:
            assert t.s1 > 0 and t.s2 > 0 and t.s3 > 0
            assert np.max(np.abs(system.residuals(t.s1, t.s2, t.s3))) <= 1e-6 * scale


def test_mirrored_scene_has_no_positive_roots(rng):
    # Negating every marker position maps each solution (s1, s2, s3) to its
    # negative. Pick a scene whose s1-polynomial has only positive real roots;
    # its mirror then has nothing in front of the cameras.
    from mutloc.polysolve import real_roots

    for _ in range(2000):
        rig, pose = random_scene(rng)
        obs = render_observation(rig, pose)
        poly, _ = scale_polynomial(build_scale_system(rig, obs))
        if np.all(real_roots(poly).real_roots > 0):
            break
    else:
        pytest.fail("no scene with all-positive roots found")
    mirrored = RigConfig(rig.intrinsics_p, rig.intrinsics_q, -rig.q1, -rig.q2, -rig.p3)
    obs3 = ObservationPair(obs.px_m1, obs.px_m2, obs.px_m3)
    with pytest.raises(NoPositiveRoots):
        solve_scales(mirrored, obs3)
    with pytest.raises(NoSolution):
        solve_mutual_pose(mirrored, obs3)


def test_filter_roots(facing):
    rig, _ = facing
    p3 = np.linalg.norm(rig.p3)
    t_bad = ScaleTriple(0.5 * p3, 2.0, 2.0)
    t_ok = ScaleTriple(2.0, 2.0, 2.0)
    assert filter_roots([t_bad, t_ok], rig) == [t_ok]
    ok = [ScaleTriple(1.0, 1.5, 2.0), ScaleTriple(2.0, 2.0, 2.0)]
    assert filter_roots(ok, rig) == ok


def test_filter_keeps_ground_truth(rng):
    for _ in range(50):
        rig, pose = random_scene(rng, distance=(1.0, 5.0))
        gt = ScaleTriple(*ground_truth_scales(rig, pose))
        assert filter_roots([gt], rig) == [gt]


def test_reprojection_cost_zero_at_ground_truth(facing):
    rig, pose = facing
    assert reprojection_cost(pose, rig, render_observation(rig, pose)) < 1e-10


def test_reprojection_cost_behind_camera_is_infinite(facing):
    rig, pose = facing
    obs = render_observation(rig, pose)
    behind = Pose(np.eye(3), [0.0, 0.0, 2.0])
    assert reprojection_cost(behind, rig, obs) == np.inf


def test_reprojection_cost_is_chi_square(facing, rng):
    rig, pose = facing
    clean = render_observation(rig, pose)
    sigma = 2.0
    costs = []
    for _ in range(4000):
        eta = rng.normal(0, sigma, (4, 2))
        obs = ObservationPair(clean.px_m1 + eta[0], clean.px_m2 + eta[1],
                              clean.px_m3 + eta[2], clean.px_m4 + eta[3])
        costs.append(reprojection_cost(pose, rig, obs) / sigma**2)
        assert costs[-1] == pytest.approx(np.sum(eta**2) / sigma**2, rel=1e-9)
    # chi-square with 8 degrees of freedom: mean 8, variance 16
    assert np.mean(costs) == pytest.approx(8.0, abs=4 * np.sqrt(16 / 4000))
    assert np.var(costs) == pytest.approx(16.0, rel=0.15)


def test_facing_cameras_exact(facing):
    rig, pose = facing
    report = solve_mutual_pose(rig, render_observation(rig, pose))
    assert_pose_close(report.best.pose, pose, 1e-6, 1e-5)
    assert report.markers_used == 4
    assert len(report.triples) == 4


def test_parallel_offset_rig_uses_filter_fallback(K500):
    # identity rotation: camera q sits ahead and to the left of p, facing the same way;
    # p's markers are mounted on a boom so they are in front of q
    rig = RigConfig(K500, K500, [0.1, 0, 0], [0.0, 0.1, 0], [-0.1, 0, 1.5], [-0.3, 0.05, 1.5])
    pose = Pose(np.eye(3), [0.2, 0.0, -1.0])
    report = solve_mutual_pose(rig, render_observation(rig, pose))
    assert_pose_close(report.best.pose, pose, 1e-6, 1e-4)
    assert any(d.used_fallback for d in report.triples)


def test_three_marker_fallback(facing):
    rig, pose = facing
    obs = render_observation(rig, pose)
    obs3 = ObservationPair(obs.px_m1, obs.px_m2, obs.px_m3)
    report = solve_mutual_pose(rig, obs3)
    assert report.markers_used == 3
    assert len(report.triples) == 1
    assert_pose_close(report.best.pose, pose, 1e-6, 1e-5)


def test_m4_without_p4_rejected(facing, K500):
    rig, pose = facing
    obs = render_observation(rig, pose)
    rig3 = RigConfig(K500, K500, rig.q1, rig.q2, rig.p3)
    with pytest.raises(ValueError):
        solve_mutual_pose(rig3, obs)


def test_report_invariants(rng):
    for sigma in (0.0, 1.0, 5.0):
        for _ in range(30):
            rig, pose = random_scene(rng)
            clean = render_observation(rig, pose)
            eta = rng.normal(0, sigma, (4, 2))
            obs = ObservationPair(clean.px_m1 + eta[0], clean.px_m2 + eta[1],
                                  clean.px_m3 + eta[2], clean.px_m4 + eta[3])
            try:
                report = solve_mutual_pose(rig, obs)
            except NoSolution:
                continue
            assert report.best.pose.is_valid()
            assert report.best.cost >= 0
            for c in report.all_candidates:
                assert c.pose.is_valid()
                assert report.best.cost <= c.cost * (1 + 1e-12)
            assert reprojection_cost(report.best.pose, rig, obs) == report.best.cost
            for d in report.triples:
                assert d.num_raw_roots <= 8
                assert d.num_filtered_roots <= d.num_positive_roots


def test_frame_swap_returns_inverse(rng):
    for _ in range(20):
        rig, pose = random_scene(rng)
        obs = render_observation(rig, pose)
        fwd = solve_mutual_pose(rig, obs).best.pose
        back = solve_mutual_pose(*swap_roles(rig, obs)).best.pose.inverse()
        np.testing.assert_allclose(back.rotation, fwd.rotation, atol=1e-6)
        np.testing.assert_allclose(back.translation, fwd.translation, atol=1e-6)


def test_output_is_deterministic(rng):
    rig, pose = random_scene(rng)
    clean = render_observation(rig, pose)
    obs = ObservationPair(clean.px_m1 + 1.3, clean.px_m2 - 0.7, clean.px_m3, clean.px_m4 + 2)
    a = solve_mutual_pose(rig, obs)
    b = solve_mutual_pose(rig, obs)
    assert np.array_equal(a.best.pose.rotation, b.best.pose.rotation)
    assert a.best.cost == b.best.cost


def test_no_filter_option(facing):
    rig, pose = facing
    report = solve_mutual_pose(rig, render_observation(rig, pose), SolverOptions(use_filter=False))
    assert_pose_close(report.best.pose, pose, 1e-6, 1e-5)
