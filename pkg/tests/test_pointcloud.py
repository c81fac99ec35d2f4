import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hilbertdepth.geometry import CalibrationBundle, InvalidCalibrationError, project_point
from hilbertdepth.pointcloud import (
    CalibrationParseError,
    MalformedScanError,
    PointCloud,
    filter_to_frustum,
    parse_calibration,
    read_velodyne_bin,
)
from conftest import IDENTITY_CAM_TO_CAM, IDENTITY_VELO_TO_CAM


class TestVelodyneBin:

    def test_empty(self):
        assert len(read_velodyne_bin(b"")) == 0

    def test_single_record_hand_encoded(self):
        # IEEE-754 single, little-endian: 1.0, 2.0, 3.0, 0.5
        raw = bytes.fromhex("0000803f" "00000040" "00004040" "0000003f")
        cloud = read_velodyne_bin(raw)
        assert cloud.data.tolist() == [[1.0, 2.0, 3.0, 0.5]]

    def test_bad_length(self):
        with pytest.raises(MalformedScanError):
            read_velodyne_bin(b"\x00" * 15)

    def test_non_finite_dropped(self, caplog):
        raw = np.array([[1, 2, 3, 0.1], [np.nan, 0, 0, 0], [4, 5, 6, 0.2]], dtype="<f4").tobytes()
        cloud = read_velodyne_bin(raw)
        assert len(cloud) == 2
        assert "dropped 1" in caplog.text

    @given(arrays(np.float32, st.tuples(st.integers(0, 40), st.just(4)),
                  elements=st.floats(-200, 200, width=32)))
    def test_round_trip_bytes(self, arr):
        raw = arr.astype("<f4").tobytes()
        assert read_velodyne_bin(raw).to_bytes() == raw


class TestCalibrationParsing:

    def test_identity(self):
        calib = parse_calibration(IDENTITY_CAM_TO_CAM, IDENTITY_VELO_TO_CAM, 2)
        assert np.array_equal(calib.p_rect, np.hstack([np.eye(3), np.zeros((3, 1))]))
        assert np.array_equal(calib.r_rect, np.eye(3))
        assert np.array_equal(calib.t_range_cam, np.eye(4))

    def test_non_orthonormal_rect(self):
        text = IDENTITY_CAM_TO_CAM.replace("R_rect_00: 1 0 0", "R_rect_00: 2 0 0")
        with pytest.raises(InvalidCalibrationError):
            parse_calibration(text, IDENTITY_VELO_TO_CAM, 2)

    def test_missing_key_named(self):
        with pytest.raises(CalibrationParseError, match="P_rect_03"):
            parse_calibration(IDENTITY_CAM_TO_CAM, IDENTITY_VELO_TO_CAM, 3)

    def test_wrong_count(self):
        with pytest.raises(CalibrationParseError, match="expected 3"):
            parse_calibration(IDENTITY_CAM_TO_CAM, "R: 1 0 0 0 1 0 0 0 1\nT: 0 0\n", 2)

    def test_kitti_composite_by_hand(self, kitti_calib_texts):
        calib = parse_calibration(*kitti_calib_texts, camera_index=2)
        P = [[7.215377e+02, 0.0, 6.095593e+02, 4.485728e+01],
             [0.0, 7.215377e+02, 1.728540e+02, 2.163791e-01],
             [0.0, 0.0, 1.0, 2.745884e-03]]
        Rr = [[9.999239e-01, 9.837760e-03, -7.445048e-03],
              [-9.869795e-03, 9.999421e-01, -4.278459e-03],
              [7.402527e-03, 4.351614e-03, 9.999631e-01]]
        Rv = [[7.533745e-03, -9.999714e-01, -6.166020e-04],
              [1.480249e-02, 7.280733e-04, -9.998902e-01],
              [9.998621e-01, 7.523790e-03, 1.480755e-02]]
        Tv = [-4.069766e-03, -7.631618e-02, -2.717806e-01]
        # hand products with plain loops: Rr4 @ T then P @ (.)
        T4 = [Rv[i] + [Tv[i]] for i in range(3)] + [[0.0, 0.0, 0.0, 1.0]]
        R4 = [Rr[i] + [0.0] for i in range(3)] + [[0.0, 0.0, 0.0, 1.0]]
        RT = [[sum(R4[i][k] * T4[k][j] for k in range(4)) for j in range(4)] for i in range(4)]
        full = [[sum(P[i][k] * RT[k][j] for k in range(4)) for j in range(4)] for i in range(3)]
        assert np.max(np.abs(calib.composite - np.array(full))) < 1e-9


class TestFrustum:

    def test_empty(self, identity_calib):
        assert len(filter_to_frustum(PointCloud.empty(), identity_calib, 10, 10)) == 0

    def test_behind_removed(self):
        calib = CalibrationBundle.identity(focal=10, cx=5, cy=5)
        cloud = PointCloud.from_xyz([[0, 0, -3]])
        assert len(filter_to_frustum(cloud, calib, 10, 10)) == 0

    def test_three_points_per_point_oracle(self):
        calib = CalibrationBundle.identity(focal=10, cx=5, cy=5)
        pts = [[0, 0, 4], [10, 0, 4], [0, 0, 200]]
        kept = filter_to_frustum(PointCloud.from_xyz(pts), calib, 10, 10, max_range=80)
        expected = []
        for p in pts:
            px = project_point(p + [1], calib)
            if px and 0 <= px.u < 10 and 0 <= px.v < 10 and 0 < px.depth <= 80:
                expected.append(p)
        assert expected == [[0, 0, 4]]
        assert kept.xyz.tolist() == [[0.0, 0.0, 4.0]]

    def test_subset_and_idempotent(self, synth_calib, rng):
        cloud = PointCloud.from_xyz(rng.uniform([-5, -20, -3], [100, 20, 3], size=(2000, 3)))
        once = filter_to_frustum(cloud, synth_calib, 160, 128)
        twice = filter_to_frustum(once, synth_calib, 160, 128)
        assert 0 < len(once) < len(cloud)
        assert np.array_equal(once.data, twice.data)
        rows = {tuple(r) for r in cloud.data.tolist()}
        assert all(tuple(r) in rows for r in once.data.tolist())
