import json

import numpy as np
import pytest

from mutloc.cli import main
from mutloc.fileio import dump_config, dump_observations, load_config, load_observations
from mutloc.geometry import rotation_error_deg
from mutloc.simulator import sweep_scenario, random_scene
from mutloc.solver import ObservationPair, render_observation


@pytest.fixture
def scene(tmp_path):
    rng = np.random.default_rng(77)
    rig, pose = random_scene(rng)
    cfg = tmp_path / "rig.yaml"
    dump_config(cfg, rig)
    obs = render_observation(rig, pose)
    obs_path = tmp_path / "obs.jsonl"
    dump_observations(obs_path, [(0, obs), (1, ObservationPair(obs.px_m1, obs.px_m2, obs.px_m3))])
    return rig, pose, cfg, obs_path


def run(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def test_config_roundtrip(tmp_path):
    spec = sweep_scenario()
    path = tmp_path / "c.yaml"
    dump_config(path, spec.rig, image_size=(960, 540), pose_gt=spec.pose_gt)
    cfg = load_config(path)
    assert cfg.rig.intrinsics_p == spec.rig.intrinsics_p
    np.testing.assert_array_equal(cfg.rig.p4, spec.rig.p4)
    np.testing.assert_allclose(cfg.pose_gt.rotation, spec.pose_gt.rotation)
    assert cfg.image_size == (960, 540)


def test_solve_matches_generator(scene, capsys):
    rig, pose, cfg, obs = scene
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--obs", str(obs))
    assert code == 0
    lines = [json.loads(x) for x in out.splitlines()]
    assert [r["markers_used"] for r in lines] == [4, 3]
    for rec in lines:
        assert rec["status"] == "ok"
        R = np.array(rec["rotation"]).reshape(3, 3)
        w, x, y, z = rec["quaternion_wxyz"]
        assert w * w + x * x + y * y + z * z == pytest.approx(1.0)
        assert set(rec["roots"]) == {"raw", "positive", "filtered"}
        assert rotation_error_deg(pose.rotation, R) < 1e-4
    np.testing.assert_allclose(lines[0]["translation"], pose.translation, atol=1e-6)


def test_solve_output_byte_identical(scene, capsys):
    _, _, cfg, obs = scene
    a = run(capsys, "solve", "--config", str(cfg), "--obs", str(obs), "--no-filter")
    b = run(capsys, "solve", "--config", str(cfg), "--obs", str(obs), "--no-filter")
    assert a == b


def test_solve_json_list_format(scene, tmp_path, capsys):
    rig, pose, cfg, _ = scene
    obs = render_observation(rig, pose)
    path = tmp_path / "obs.json"
    path.write_text(json.dumps([{"frame": "a", "m1": list(obs.px_m1), "m2": list(obs.px_m2),
                                 "m3": list(obs.px_m3)}]))
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--obs", str(path), "--imag-tol", "1e-5")
    assert code == 0
    assert json.loads(out)["frame"] == "a"


def test_missing_marker_key(tmp_path, scene, capsys):
    _, _, cfg, obs = scene
    text = cfg.read_text().splitlines()
    start = next(i for i, line in enumerate(text) if line.strip().startswith("q2:"))
    # block-style lists span the key line plus three items
    del text[start:start + 4]
    bad = tmp_path / "bad.yaml"
    bad.write_text("\n".join(text) + "\n")
    code, out, err = run(capsys, "solve", "--config", str(bad), "--obs", str(obs))
    assert code == 1
    assert out == ""
    assert err.startswith("mutloc: error:")
    assert "markers.q2" in err and "bad.yaml" in err and "line" in err
    assert len(err.strip().splitlines()) == 1


def test_unknown_key_names_line(tmp_path, scene, capsys):
    _, _, cfg, obs = scene
    bad = tmp_path / "bad.yaml"
    bad.write_text(cfg.read_text() + "extra_section: 1\n")
    code, _, err = run(capsys, "solve", "--config", str(bad), "--obs", str(obs))
    assert code == 1
    n_lines = len(cfg.read_text().splitlines()) + 1
    assert f"line {n_lines}" in err and "extra_section" in err


def test_yaml_syntax_error(tmp_path, scene, capsys):
    _, _, _, obs = scene
    bad = tmp_path / "bad.yaml"
    bad.write_text("camera_p: {fx: 1\n")
    code, _, err = run(capsys, "solve", "--config", str(bad), "--obs", str(obs))
    assert code == 1 and "parse error" in err


def test_bad_observation_record(tmp_path, scene, capsys):
    _, _, cfg, _ = scene
    bad = tmp_path / "obs.jsonl"
    bad.write_text('{"frame": 1, "m1": [1, 2], "m2": [3, 4]}\n')
    code, _, err = run(capsys, "solve", "--config", str(cfg), "--obs", str(bad))
    assert code == 1 and "m3" in err and "line 1" in err
    bad.write_text('{"frame": 1, "m1": [1, 2], "m2": [3, 4], "m3": [1, 1], "m9": [0, 0]}\n')
    code, _, err = run(capsys, "solve", "--config", str(cfg), "--obs", str(bad))
    assert code == 1 and "m9" in err


def test_unsolvable_record_exits_2(tmp_path, scene, capsys):
    _, _, cfg, _ = scene
    path = tmp_path / "obs.jsonl"
    # both M1 and M2 on the same pixel: degenerate bearing in every triple using them
    path.write_text('{"frame": 9, "m1": [400, 300], "m2": [400, 300], "m3": [500, 250]}\n')
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--obs", str(path))
    assert code == 2
    rec = json.loads(out)
    assert rec["status"] == "failed" and rec["frame"] == 9


def test_load_observations_rejects_duplicate_frames(tmp_path):
    path = tmp_path / "o.jsonl"
    rec = '{"frame": 1, "m1": [1, 2], "m2": [3, 4], "m3": [5, 6]}'
    path.write_text(rec + "\n" + rec + "\n")
    with pytest.raises(Exception, match="duplicate"):
        load_observations(path)


def test_sweep_zero_sigma(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--sigmas", "0", "--trials", "10", "--seed", "7",
                       "--out", str(tmp_path))
    assert code == 0
    header, row = out.strip().splitlines()
    assert float(row.split(",")[3]) < 1e-5
    assert (tmp_path / "trials.csv").exists() and (tmp_path / "summary.csv").exists()


def test_sweep_with_config(tmp_path, capsys):
    spec = sweep_scenario()
    cfg = tmp_path / "c.yaml"
    dump_config(cfg, spec.rig, image_size=(960, 540), pose_gt=spec.pose_gt)
    code, out, _ = run(capsys, "sweep", "--config", str(cfg), "--sigmas", "0,1", "--trials", "3",
                       "--out", str(tmp_path / "o"))
    assert code == 0 and len(out.strip().splitlines()) == 3


def test_sweep_bit_identical(tmp_path, capsys):
    for name in ("a", "b"):
        code, _, _ = run(capsys, "sweep", "--sigmas", "2,4,6,8,10", "--trials", "200", "--seed", "7",
                         "--out", str(tmp_path / name))
        assert code == 0
    for f in ("trials.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize("argv", [
    ["sweep", "--sigmas", "a,b", "--out", "x"],
    ["sweep", "--sigmas", "-1", "--out", "x"],
    ["sweep", "--sigmas", "1", "--trials", "0", "--out", "x"],
    ["sweep", "--sigmas", "1"],
    ["frobnicate"],
])
def test_invalid_flags_exit_1(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert err.startswith("mutloc: error:")


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0 and "passed" in out


def test_selftest_reports_injected_failure(monkeypatch, capsys):
    monkeypatch.setenv("MUTLOC_SELFTEST_RESIDUAL_TOL", "-1")
    code, _, err = run(capsys, "selftest")
    assert code == 3
    assert "check '" in err


def test_log_env_validated(monkeypatch, capsys):
    monkeypatch.setenv("MUTLOC_LOG", "loud")
    code, _, err = run(capsys, "selftest")
    assert code == 1 and "MUTLOC_LOG" in err
