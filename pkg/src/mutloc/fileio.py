"""Rig configuration (YAML) and observation (JSON) files.

Config layout::

    camera_p: {fx: 500, fy: 500, cx: 480, cy: 270}   # skew optional
    camera_q: {fx: 500, fy: 500, cx: 480, cy: 270}
    markers:
      q1: [0.2, -0.05, 0.0]    # on robot q, frame {q}, meters
      q2: [-0.2, -0.05, 0.0]
      p3: [0.2, -0.05, 0.0]    # on robot p, frame {p}, meters
      p4: [-0.2, -0.05, 0.0]   # optional
    solver:                    # optional
      imag_tol: 1.0e-6
      use_filter: true
      residual_tol: 1.0e-6
    scenario:                  # optional, used by ``mutloc sweep``
      image_size: [960, 540]
      rotation: [[...], [...], [...]]
      translation: [0.0, 0.0, 1.0]

Observations are JSON: either a list of records or one record per line,
each ``{"frame": ..., "m1": [u, v], "m2": [u, v], "m3": [u, v], "m4": [u, v]}``
with ``m4`` optional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .errors import ConfigError
from .geometry import CameraIntrinsics, Pose
from .solver import ObservationPair, RigConfig, SolverOptions

CAMERA_KEYS = {"fx", "fy", "cx", "cy", "skew"}
MARKER_KEYS = {"q1", "q2", "p3", "p4"}
SOLVER_KEYS = {"imag_tol", "use_filter", "residual_tol"}
SCENARIO_KEYS = {"image_size", "rotation", "translation"}
TOP_KEYS = {"camera_p", "camera_q", "markers", "solver", "scenario"}
RECORD_KEYS = {"frame", "m1", "m2", "m3", "m4"}


@dataclass(frozen=True)
class ConfigFile:
    rig: RigConfig
    solver: SolverOptions
    image_size: Optional[tuple] = None
    pose_gt: Optional[Pose] = None


@dataclass(frozen=True)
class ObservationRecord:
    frame: Any
    observation: ObservationPair
    line: Optional[int] = None


def _line_index(node, prefix="", out=None) -> dict:
    """Map dotted key paths to 1-based line numbers from a composed YAML tree."""
    if out is None:
        out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            _line_index(v, path, out)
    return out


class _Reader:
    def __init__(self, path, lines):
        self.path = path
        self.lines = lines

    def fail(self, key, message):
        line = self.lines.get(key)
        if line is None and "." in key:
            line = self.lines.get(key.rsplit(".", 1)[0])
        raise ConfigError(message, self.path, line, key)

    def check_keys(self, value, key, allowed):
        if not isinstance(value, dict):
            self.fail(key, "expected a mapping")
        for k in value:
            if k not in allowed:
                self.fail(f"{key}.{k}" if key else str(k), "unknown key")

    def number(self, value, key):
        if isinstance(value, bool):
            self.fail(key, "expected a number")
        try:
            x = float(value)
        except (TypeError, ValueError):
            self.fail(key, f"expected a number, got {value!r}")
        if not np.isfinite(x):
            self.fail(key, "value must be finite")
        return x

    def vector(self, value, key, n):
        if not isinstance(value, (list, tuple)) or len(value) != n:
            self.fail(key, f"expected a list of {n} numbers")
        return [self.number(v, f"{key}") for v in value]


def load_config(path) -> ConfigFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file ({exc.strerror})", path) from exc
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"parse error: {problem}", path, line) from exc
    rd = _Reader(path, _line_index(node) if node is not None else {})
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", path, 1)
    rd.check_keys(data, "", TOP_KEYS)

    def section(key, allowed, required=True):
        if key not in data:
            if required:
                rd.fail(key, "missing required key")
            return None
        value = data[key]
        if value is None and not required:
            return None
        rd.check_keys(value, key, allowed)
        return value

    cams = {}
    for name in ("camera_p", "camera_q"):
        sec = section(name, CAMERA_KEYS)
        vals = {}
        for k in ("fx", "fy", "cx", "cy"):
            if k not in sec:
                rd.fail(f"{name}.{k}", "missing required key")
            vals[k] = rd.number(sec[k], f"{name}.{k}")
        vals["skew"] = rd.number(sec.get("skew", 0.0), f"{name}.skew")
        try:
            cams[name] = CameraIntrinsics(**vals)
        except ValueError as exc:
            rd.fail(name, str(exc))

    markers = section("markers", MARKER_KEYS)
    mk = {}
    for k in ("q1", "q2", "p3"):
        if k not in markers:
            rd.fail(f"markers.{k}", "missing required key")
        mk[k] = rd.vector(markers[k], f"markers.{k}", 3)
    mk["p4"] = rd.vector(markers["p4"], "markers.p4", 3) if "p4" in markers else None
    try:
        rig = RigConfig(cams["camera_p"], cams["camera_q"], **mk)
    except ValueError as exc:
        rd.fail("markers", str(exc))

    solver = SolverOptions()
    sec = section("solver", SOLVER_KEYS, required=False)
    if sec:
        kw = {}
        for k in ("imag_tol", "residual_tol"):
            if k in sec:
                kw[k] = rd.number(sec[k], f"solver.{k}")
        if "use_filter" in sec:
            if not isinstance(sec["use_filter"], bool):
                rd.fail("solver.use_filter", "expected true or false")
            kw["use_filter"] = sec["use_filter"]
        solver = SolverOptions(**kw)

    image_size = pose = None
    sec = section("scenario", SCENARIO_KEYS, required=False)
    if sec:
        if "image_size" in sec:
            w, h = rd.vector(sec["image_size"], "scenario.image_size", 2)
            image_size = (int(w), int(h))
        if "rotation" in sec or "translation" in sec:
            rot = sec.get("rotation", [[1, 0, 0], [0, 1, 0], [0, 0, 1]])
            if not isinstance(rot, list) or len(rot) != 3:
                rd.fail("scenario.rotation", "expected a 3x3 matrix")
            R = [rd.vector(row, "scenario.rotation", 3) for row in rot]
            if "translation" not in sec:
                rd.fail("scenario.translation", "missing required key")
            t = rd.vector(sec["translation"], "scenario.translation", 3)
            pose = Pose(R, t)
            if not pose.is_valid(1e-6):
                rd.fail("scenario.rotation", "not a proper rotation matrix")
    return ConfigFile(rig, solver, image_size, pose)


def _parse_record(obj, path, line, where) -> ObservationRecord:
    def fail(key, message):
        raise ConfigError(message, path, line, f"{where}.{key}" if line is None else key)

    if not isinstance(obj, dict):
        raise ConfigError("record must be a JSON object", path, line, where if line is None else None)
    for k in obj:
        if k not in RECORD_KEYS:
            fail(k, "unknown key")
    px = {}
    for k in ("m1", "m2", "m3", "m4"):
        if k not in obj:
            if k != "m4":
                fail(k, "missing required key")
            continue
        v = obj[k]
        if (not isinstance(v, list) or len(v) != 2
                or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)
                or not all(np.isfinite(v))):
            fail(k, "expected [u, v] with finite numbers")
        px[k] = v
    obs = ObservationPair(px["m1"], px["m2"], px["m3"], px.get("m4"))
    return ObservationRecord(obj.get("frame"), obs, line)


def load_observations(path) -> list:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file ({exc.strerror})", path) from exc
    records = []
    if text.lstrip().startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"parse error: {exc.msg}", path, exc.lineno) from exc
        for i, obj in enumerate(data):
            records.append(_parse_record(obj, path, None, f"[{i}]"))
    else:
        for lineno, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"parse error: {exc.msg}", path, lineno) from exc
            records.append(_parse_record(obj, path, lineno, ""))
    frames = [r.frame for r in records if r.frame is not None]
    if len({json.dumps(f, sort_keys=True) for f in frames}) != len(frames):
        raise ConfigError("duplicate frame id", path)
    return records


def dump_config(path, rig: RigConfig, solver: SolverOptions = SolverOptions(),
                image_size=None, pose_gt: Optional[Pose] = None):
    """Write a config file that :func:`load_config` reads back to the same values."""

    def cam(K):
        return {"fx": float(K.fx), "fy": float(K.fy), "cx": float(K.cx), "cy": float(K.cy),
                "skew": float(K.skew)}

    data = {
        "camera_p": cam(rig.intrinsics_p),
        "camera_q": cam(rig.intrinsics_q),
        "markers": {k: [float(x) for x in getattr(rig, k)] for k in ("q1", "q2", "p3", "p4")
                    if getattr(rig, k) is not None},
        "solver": {"imag_tol": solver.imag_tol, "use_filter": solver.use_filter,
                   "residual_tol": solver.residual_tol},
    }
    if image_size is not None or pose_gt is not None:
        scen = {}
        if image_size is not None:
            scen["image_size"] = [int(image_size[0]), int(image_size[1])]
        if pose_gt is not None:
            scen["rotation"] = [[float(x) for x in row] for row in pose_gt.rotation]
            scen["translation"] = [float(x) for x in pose_gt.translation]
        data["scenario"] = scen
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def dump_observations(path, records):
    """Write ``(frame, ObservationPair)`` pairs as JSON lines."""
    lines = []
    for frame, obs in records:
        rec = {"frame": frame}
        for k in ("m1", "m2", "m3", "m4"):
            v = getattr(obs, f"px_{k}")
            if v is not None:
                rec[k] = [float(x) for x in v]
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n")
