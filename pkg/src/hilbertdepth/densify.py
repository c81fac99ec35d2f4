"""Dense depth rendering by marching pixel rays through the occupancy field,
plus the direct-projection baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import CalibrationBundle, Ray, backproject_pixels, camera_rays_to_sensor, project_points

logger = logging.getLogger(__name__)


class NoDataError(ValueError):
    pass


@dataclass(frozen=True)
class DepthImage:
    """Row-major (height, width) depths in meters; 0.0 marks invalid pixels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth image must be 2-D")
        if np.any(~np.isfinite(v)) or np.any(v < 0):
            raise ValueError("depths must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def invalid(cls, width: int, height: int) -> "DepthImage":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0

    def valid_fraction(self) -> float:
        return float(np.count_nonzero(self.valid)) / self.values.size if self.values.size else 0.0


@dataclass(frozen=True)
class MarchParams:
    step: float = 0.1
    t_min: float = 1.0
    t_max: float = 80.0
    threshold: float = 0.6
    refine_iters: int = 8

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.refine_iters < 0:
            raise ValueError("refine_iters must be non-negative")


def _march(origin, dirs, model, params: MarchParams) -> np.ndarray:
    dirs = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
    if len(model.inducing) == 0 or model.dense:
        return _march_reference(origin, dirs, model, params)
    return _kernels.march_rays(
        np.ascontiguousarray(origin, dtype=np.float64), dirs, model.w, *model._grid_args(),
        float(params.t_min), float(params.t_max), float(params.step),
        float(params.threshold), int(params.refine_iters),
    )


def _march_reference(origin, dirs, model, params: MarchParams) -> np.ndarray:
    """Same march evaluated through the model's public occupancy query."""
    out = np.full(len(dirs), np.nan)
    n_steps = int(np.floor((params.t_max - params.t_min) / params.step + 1e-9))
    ts = params.t_min + np.arange(n_steps + 1) * params.step
    for r, d in enumerate(dirs):
        occ = model.occupancy(origin + ts[:, None] * d) >= params.threshold
        hits = np.flatnonzero(occ)
        if not len(hits):
            continue
        k = hits[0]
        if k == 0:
            out[r] = ts[0]
            continue
        lo, hi = ts[k - 1], ts[k]
        for _ in range(params.refine_iters):
            mid = 0.5 * (lo + hi)
            if model.occupancy((origin + mid * d)[None, :])[0] >= params.threshold:
                hi = mid
            else:
                lo = mid
        out[r] = 0.5 * (lo + hi)
    return out


def ray_depth(ray: Ray, model, params: MarchParams = MarchParams()):
    """Distance along ``ray`` to the first occupancy crossing, or None.

    The ray must be expressed in the model's frame.
    """
    t = _march(np.asarray(ray.origin, dtype=np.float64), np.asarray(ray.direction)[None, :], model, params)[0]
    return None if np.isnan(t) else float(t)


def render_depth(model, calib: CalibrationBundle, width: int, height: int,
                 params: MarchParams = MarchParams()) -> DepthImage:
    """March one ray per pixel center of a ``width`` x ``height`` image.

    ``calib`` must already describe this resolution.  Marched distances are
    converted to projected depth so the result matches direct projection.
    """
    vv, uu = np.mgrid[0:height, 0:width]
    uv = np.column_stack([uu.ravel(), vv.ravel()]).astype(np.float64)
    origin_cam, dirs_cam = backproject_pixels(uv, calib)
    origin, dirs = camera_rays_to_sensor(origin_cam, dirs_cam, calib)
    t = _march(origin, dirs, model, params)
    depth = t * (dirs_cam @ calib.p_rect[2, :3])
    depth = np.where(np.isnan(depth) | (depth <= 0), 0.0, depth)
    return DepthImage(depth.reshape(height, width))


@dataclass
class DensifyResult:
    image: DepthImage
    model: object
    cluster_count: int
    sample_count: int
    final_loss: float
    valid_fraction: float
    timings: dict = field(default_factory=dict)


def densify_depth_image(cloud, calib: CalibrationBundle, width: int, height: int,
                        params: MarchParams | None = None, config=None,
                        native_size: tuple[int, int] | None = None) -> DensifyResult:
    """Frustum filter, cluster, sample, train, then render.

    ``calib`` describes an image of ``native_size`` (defaults to the output
    size); the render at ``width`` x ``height`` rescales it.
    """
    from .clustering import quick_means
    from .config import PipelineConfig
    from .hilbert_map import generate_training_samples, train
    from .pointcloud import filter_to_frustum

    config = config or PipelineConfig()
    params = params or config.march()
    native_w, native_h = native_size or (width, height)
    timings = {}

    t0 = time.perf_counter()
    visible = filter_to_frustum(cloud, calib, native_w, native_h, config.max_range)
    if len(visible) == 0:
        raise NoDataError("no LiDAR points inside the camera frustum")
    timings["frustum"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    inducing = quick_means(visible, config.tau, config.d0, config.seed, config.epsilon)
    timings["clustering"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    samples = generate_training_samples(visible, (0.0, 0.0, 0.0), config.free_spacing, config.seed,
                                        config.near_margin, config.far_margin)
    model = train(samples, inducing, config.training(),
                  kernel_cutoff=config.kernel_cutoff_radii * config.tau, cutoff_d0=config.d0)
    timings["training"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    render_calib = calib.scaled(width / native_w, height / native_h)
    image = render_depth(model, render_calib, width, height, params)
    timings["render"] = time.perf_counter() - t0

    frac = image.valid_fraction()
    logger.info("densified %dx%d: %d clusters, %d samples, valid %.2f%%",
                width, height, len(inducing), len(samples), 100 * frac)
    return DensifyResult(image, model, len(inducing), len(samples),
                         float(model.loss_history[-1]), frac, timings)


def project_sparse(cloud, calib: CalibrationBundle, width: int, height: int,
                   max_range: float = np.inf) -> DepthImage:
    """Z-buffered direct projection: the nearest point wins each rounded pixel."""
    img = np.zeros((height, width))
    if len(cloud) == 0:
        return DepthImage(img)
    uvz, front = project_points(cloud.xyz, calib)
    uvz = uvz[front]
    col = np.rint(uvz[:, 0]).astype(np.int64)
    row = np.rint(uvz[:, 1]).astype(np.int64)
    keep = (col >= 0) & (col < width) & (row >= 0) & (row < height) & (uvz[:, 2] <= max_range)
    col, row, z = col[keep], row[keep], uvz[keep, 2]
    flat = np.full(height * width, np.inf)
    np.minimum.at(flat, row * width + col, z)
    flat[np.isinf(flat)] = 0.0
    return DepthImage(flat.reshape(height, width))
