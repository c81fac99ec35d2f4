"""LiDAR scans and KITTI calibration files."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CalibrationBundle, project_points

logger = logging.getLogger(__name__)

RECORD_DTYPE = np.dtype("<f4")
DEFAULT_MAX_RANGE = 80.0


class MalformedScanError(ValueError):
    pass


class CalibrationParseError(ValueError):
    pass


@dataclass(frozen=True)
class PointCloud:
    """(N, 4) float32 array of x, y, z (meters, sensor frame) and intensity."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32).reshape(-1, 4)
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud coordinates must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_xyz(cls, xyz, intensity: float = 0.0) -> "PointCloud":
        xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
        return cls(np.column_stack([xyz, np.full(len(xyz), intensity)]))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 4), dtype=np.float32))

    @property
    def xyz(self) -> np.ndarray:
        return self.data[:, :3].astype(np.float64)

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, 3]

    def __len__(self) -> int:
        return len(self.data)

    def subset(self, mask) -> "PointCloud":
        return PointCloud(self.data[mask])

    def to_bytes(self) -> bytes:
        return self.data.astype(RECORD_DTYPE).tobytes()


def read_velodyne_bin(raw: bytes) -> PointCloud:
    """Parse packed little-endian float32 (x, y, z, intensity) records."""
    if len(raw) % 16:
        raise MalformedScanError(
            f"scan length {len(raw)} bytes is not a multiple of the 16-byte record size"
        )
    arr = np.frombuffer(raw, dtype=RECORD_DTYPE).reshape(-1, 4)
    finite = np.all(np.isfinite(arr), axis=1)
    dropped = int(np.count_nonzero(~finite))
    if dropped:
        logger.warning("dropped %d non-finite scan records", dropped)
        arr = arr[finite]
    return PointCloud(arr)


def load_velodyne_bin(path) -> PointCloud:
    return read_velodyne_bin(Path(path).read_bytes())


def write_velodyne_bin(cloud: PointCloud, path) -> None:
    Path(path).write_bytes(cloud.to_bytes())


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if ":" not in line:
            continue
        key, _, value = line.partition(":")
        out[key.strip()] = value.strip()
    return out


def _floats(table: dict[str, str], key: str, count: int) -> np.ndarray:
    if key not in table:
        raise CalibrationParseError(f"missing calibration key {key!r}")
    try:
        values = [float(tok) for tok in table[key].split()]
    except ValueError as exc:
        raise CalibrationParseError(f"non-numeric value under {key!r}") from exc
    if len(values) != count:
        raise CalibrationParseError(f"{key!r} has {len(values)} values, expected {count}")
    return np.array(values)


def parse_calibration(cam_to_cam_text: str, velo_to_cam_text: str, camera_index: int = 2) -> CalibrationBundle:
    cam = _parse_kv(cam_to_cam_text)
    velo = _parse_kv(velo_to_cam_text)
    p_rect = _floats(cam, f"P_rect_{camera_index:02d}", 12).reshape(3, 4)
    r_rect = _floats(cam, "R_rect_00", 9).reshape(3, 3)
    t = np.eye(4)
    t[:3, :3] = _floats(velo, "R", 9).reshape(3, 3)
    t[:3, 3] = _floats(velo, "T", 3)
    return CalibrationBundle(p_rect, r_rect, t)


def load_calibration(cam_to_cam_path, velo_to_cam_path, camera_index: int = 2) -> CalibrationBundle:
    return parse_calibration(
        Path(cam_to_cam_path).read_text(), Path(velo_to_cam_path).read_text(), camera_index
    )


def frustum_mask(cloud: PointCloud, calib: CalibrationBundle, width: int, height: int,
                 max_range: float = DEFAULT_MAX_RANGE) -> np.ndarray:
    uvz, front = project_points(cloud.xyz, calib)
    with np.errstate(invalid="ignore"):
        return (
            front
            & (uvz[:, 0] >= 0) & (uvz[:, 0] < width)
            & (uvz[:, 1] >= 0) & (uvz[:, 1] < height)
            & (uvz[:, 2] <= max_range)
        )


def filter_to_frustum(cloud: PointCloud, calib: CalibrationBundle, width: int, height: int,
                      max_range: float = DEFAULT_MAX_RANGE) -> PointCloud:
    """Keep the points that project inside the image with 0 < depth <= max_range."""
    if width <= 0 or height <= 0 or max_range <= 0:
        raise ValueError("width, height and max_range must be positive")
    return cloud.subset(frustum_mask(cloud, calib, width, height, max_range))
