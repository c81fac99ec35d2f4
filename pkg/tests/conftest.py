import numpy as np
import pytest

from hilbertdepth.geometry import CalibrationBundle
from hilbertdepth.synthetic import load_scene, simulate_scan, synthetic_calibration

# excerpt of a KITTI raw calibration (2011_09_26)
KITTI_CAM_TO_CAM = """\
calib_time: 09-Jan-2012 13:57:47
corner_dist: 9.950000e-02
R_rect_00: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01
P_rect_00: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P_rect_02: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
"""

KITTI_VELO_TO_CAM = """\
calib_time: 15-Mar-2012 11:37:16
R: 7.533745e-03 -9.999714e-01 -6.166020e-04 1.480249e-02 7.280733e-04 -9.998902e-01 9.998621e-01 7.523790e-03 1.480755e-02
T: -4.069766e-03 -7.631618e-02 -2.717806e-01
delta_f: 0.000000e+00 0.000000e+00
delta_c: 0.000000e+00 0.000000e+00
"""

IDENTITY_CAM_TO_CAM = """\
R_rect_00: 1 0 0 0 1 0 0 0 1
P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0
"""

IDENTITY_VELO_TO_CAM = """\
R: 1 0 0 0 1 0 0 0 1
T: 0 0 0
"""


@pytest.fixture
def kitti_calib_texts():
    return KITTI_CAM_TO_CAM, KITTI_VELO_TO_CAM


@pytest.fixture
def identity_calib():
    return CalibrationBundle.identity()


@pytest.fixture(scope="session")
def synth_calib():
    return synthetic_calibration()


@pytest.fixture(scope="session")
def wall_scene():
    return load_scene("wall10")


@pytest.fixture(scope="session")
def wall_cloud(wall_scene):
    return simulate_scan(wall_scene)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_calib_dir(path):
    path.mkdir(parents=True, exist_ok=True)
    (path / "calib_cam_to_cam.txt").write_text(KITTI_CAM_TO_CAM)
    (path / "calib_velo_to_cam.txt").write_text(KITTI_VELO_TO_CAM)
    return path


@pytest.fixture(scope="session")
def wall_densified(wall_cloud, synth_calib):
    from hilbertdepth.densify import densify_depth_image

    return densify_depth_image(wall_cloud, synth_calib, 160, 128)


def _row(m):
    return " ".join(f"{v:.12e}" for v in np.asarray(m, dtype=np.float64).ravel())


def write_synthetic_calib_dir(path, calib=None):
    """KITTI-format calibration files for the synthetic camera rig."""
    calib = calib or synthetic_calibration()
    path.mkdir(parents=True, exist_ok=True)
    t = calib.t_range_cam
    (path / "calib_cam_to_cam.txt").write_text(
        f"R_rect_00: {_row(calib.r_rect)}\nP_rect_02: {_row(calib.p_rect)}\n")
    (path / "calib_velo_to_cam.txt").write_text(f"R: {_row(t[:3, :3])}\nT: {_row(t[:3, 3])}\n")
    return path


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; all lines are printed in the session summary."""
    def add(number, passed, detail):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        line = f"criterion {number}: {status} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
