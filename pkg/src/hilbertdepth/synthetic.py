"""Analytic test scenes: bounded planes and spheres, a simulated multi-beam
LiDAR and an exact depth renderer.

Scene files are line-oriented ``key: values`` text::

    name: wall10
    plane: cx cy cz  nx ny nz  ax ay az  half_u half_v
    sphere: cx cy cz  radius

Plane rectangles span ``half_u`` along the in-plane axis ``a`` and
``half_v`` along ``n x a``.  ``inf`` extents give unbounded planes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .densify import DepthImage
from .geometry import CalibrationBundle, backproject_pixels, camera_rays_to_sensor
from .pointcloud import PointCloud

NAMED_SCENES = ("wall10", "street-mock")


@dataclass(frozen=True)
class Plane:
    center: tuple
    normal: tuple
    axis: tuple
    half_u: float = np.inf
    half_v: float = np.inf

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        a = np.asarray(self.axis, dtype=np.float64)
        a = a - (a @ n) * n
        a = a / np.linalg.norm(a)
        b = np.cross(n, a)
        c = np.asarray(self.center, dtype=np.float64)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((c - origin) @ n) / denom
        t = np.where(np.abs(denom) > 1e-12, t, np.inf)
        with np.errstate(invalid="ignore"):
            rel = origin + t[:, None] * dirs - c
            inside = (np.abs(rel @ a) <= self.half_u) & (np.abs(rel @ b) <= self.half_v) & (t > 0)
        return np.where(inside, t, np.inf)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def intersect(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        oc = origin - np.asarray(self.center, dtype=np.float64)
        b = dirs @ oc
        c = oc @ oc - self.radius ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = -b - root
        t1 = -b + root
        t = np.where(t0 > 0, t0, t1)
        return np.where((disc >= 0) & (t > 0), t, np.inf)


@dataclass(frozen=True)
class Scene:
    primitives: tuple = ()
    name: str = "scene"

    def __post_init__(self):
        for prim in self.primitives:
            if not isinstance(prim, (Plane, Sphere)):
                raise TypeError(f"unsupported primitive {prim!r}")

    def cast(self, origin, dirs) -> np.ndarray:
        """Distance to the nearest hit along each unit direction (inf on miss)."""
        origin = np.asarray(origin, dtype=np.float64)
        dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
        best = np.full(len(dirs), np.inf)
        for prim in self.primitives:
            best = np.minimum(best, prim.intersect(origin, dirs))
        return best


def parse_scene(text: str) -> Scene:
    prims = []
    name = "scene"
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key: values'")
        key = key.strip()
        if key == "name":
            name = value.strip()
            continue
        vals = [float(v) for v in value.split()]
        if key == "plane":
            if len(vals) not in (9, 11):
                raise ValueError(f"line {lineno}: plane takes 9 or 11 values")
            extent = vals[9:] if len(vals) == 11 else [np.inf, np.inf]
            prims.append(Plane(tuple(vals[0:3]), tuple(vals[3:6]), tuple(vals[6:9]), *extent))
        elif key == "sphere":
            if len(vals) != 4:
                raise ValueError(f"line {lineno}: sphere takes 4 values")
            prims.append(Sphere(tuple(vals[0:3]), vals[3]))
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return Scene(tuple(prims), name)


def load_scene(name_or_path) -> Scene:
    """Load a bundled scene by name or a scene file by path."""
    if str(name_or_path) in NAMED_SCENES:
        text = resources.files("hilbertdepth").joinpath("scenes", f"{name_or_path}.scene").read_text()
    else:
        text = Path(name_or_path).read_text()
    return parse_scene(text)


@dataclass(frozen=True)
class BeamPattern:
    """Angular sampling grid of a spinning multi-beam sensor, degrees."""

    beams: int = 64
    elevation_range: tuple = (-12.0, 6.0)
    azimuth_range: tuple = (-30.0, 30.0)
    azimuth_step: float = 0.4
    max_range: float = 120.0

    def directions(self) -> np.ndarray:
        el = np.deg2rad(np.linspace(*self.elevation_range, self.beams))
        n_az = int(round((self.azimuth_range[1] - self.azimuth_range[0]) / self.azimuth_step)) + 1
        az = np.deg2rad(np.linspace(*self.azimuth_range, n_az))
        el, az = np.meshgrid(el, az, indexing="ij")
        # sensor frame: x forward, y left, z up
        return np.column_stack([
            (np.cos(el) * np.cos(az)).ravel(),
            (np.cos(el) * np.sin(az)).ravel(),
            np.sin(el).ravel(),
        ])


def simulate_scan(scene: Scene, beams: int = 64, azimuth_range=(-30.0, 30.0),
                  elevation_range=(-12.0, 6.0), seed: int = 0, azimuth_step: float = 0.4,
                  noise_sigma: float = 0.0, max_range: float = 120.0) -> PointCloud:
    """Closest analytic returns of every beam, in the sensor frame."""
    pattern = BeamPattern(beams, tuple(elevation_range), tuple(azimuth_range), azimuth_step, max_range)
    dirs = pattern.directions()
    t = scene.cast(np.zeros(3), dirs)
    hit = np.isfinite(t) & (t <= max_range)
    t = t[hit]
    if noise_sigma > 0:
        t = t + np.random.default_rng(seed).normal(0.0, noise_sigma, size=t.shape)
    pts = dirs[hit] * t[:, None]
    return PointCloud(np.column_stack([pts, np.ones(len(pts))]))


def analytic_depth(scene: Scene, calib: CalibrationBundle, width: int, height: int) -> DepthImage:
    """Exact z-depth of the nearest surface behind every pixel; 0 where nothing is hit."""
    vv, uu = np.mgrid[0:height, 0:width]
    uv = np.column_stack([uu.ravel(), vv.ravel()]).astype(np.float64)
    origin_cam, dirs_cam = backproject_pixels(uv, calib)
    origin, dirs = camera_rays_to_sensor(origin_cam, dirs_cam, calib)
    t = scene.cast(origin, dirs)
    depth = t * (dirs_cam @ calib.p_rect[2, :3])
    depth = np.where(np.isfinite(depth) & (depth > 0), depth, 0.0)
    return DepthImage(depth.reshape(height, width))


def synthetic_calibration(width: int = 160, height: int = 128, focal: float = 400.0,
                          lidar_offset=(0.0, 0.08, 0.27)) -> CalibrationBundle:
    """Forward-looking camera near a LiDAR with x forward, y left, z up.

    ``lidar_offset`` is the LiDAR origin in camera coordinates.
    """
    p = np.array([[focal, 0.0, width / 2.0, 0.0],
                  [0.0, focal, height / 2.0, 0.0],
                  [0.0, 0.0, 1.0, 0.0]])
    t = np.eye(4)
    t[:3, :3] = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]]
    t[:3, 3] = lidar_offset
    return CalibrationBundle(p, np.eye(3), t)
