import numpy as np
import pytest

from mutloc.geometry import CameraIntrinsics, Pose, rot_y
from mutloc.solver import RigConfig

_acceptance_lines = []


@pytest.fixture
def K500():
    return CameraIntrinsics(500.0, 500.0, 480.0, 270.0)


@pytest.fixture
def facing(K500):
    """Two cameras 2 m apart looking at each other, markers 10 cm either side."""
    rig = RigConfig(K500, K500, [0.1, 0, 0], [-0.1, 0, 0], [0.1, 0, 0], [-0.1, 0, 0])
    return rig, Pose(rot_y(180.0), [0.0, 0.0, 2.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_report():
    def record(name, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _acceptance_lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
