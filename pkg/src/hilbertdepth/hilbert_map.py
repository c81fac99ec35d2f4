"""Continuous occupancy model: Gaussian kernel features over inducing points
and a logistic classifier trained by mini-batch SGD with an elastic net.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .clustering import DEFAULT_D0, DEFAULT_TAU, InducingSet
from .pointcloud import PointCloud

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
CUTOFF_RADII = 3.0


class DegenerateTrainingError(ValueError):
    pass


class LabeledSample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class Samples:
    """Occupancy training set: points (N, 3) and labels (N,) in {-1, +1}."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64).reshape(-1, 3)
        y = np.ascontiguousarray(self.y, dtype=np.float64).reshape(-1)
        if len(x) != len(y):
            raise ValueError("points and labels differ in length")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be exactly -1 or +1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_list(cls, samples) -> "Samples":
        samples = list(samples)
        if not samples:
            return cls(np.zeros((0, 3)), np.zeros(0))
        return cls(np.array([s.x for s in samples]), np.array([s.y for s in samples]))

    def __len__(self) -> int:
        return len(self.y)

    def __iter__(self):
        for xi, yi in zip(self.x, self.y):
            yield LabeledSample(xi, int(yi))

    def take(self, idx) -> "Samples":
        return Samples(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 256
    l1_weight: float = 1e-4
    l2_weight: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.l1_weight < 0 or self.l2_weight < 0:
            raise ValueError("regularization weights must be non-negative")


@dataclass
class OccupancyModel:
    """Trained occupancy field.

    Features are truncated to clusters within
    ``kernel_cutoff * (1 + |x| / cutoff_d0)`` of the query ``x``; with the
    default settings that is three local cluster radii.  An infinite
    ``kernel_cutoff`` evaluates every cluster.
    """

    inducing: InducingSet
    w: np.ndarray
    kernel_cutoff: float = CUTOFF_RADII * DEFAULT_TAU
    cutoff_d0: float = DEFAULT_D0
    sigma_inverses: np.ndarray = None
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if len(self.w) != len(self.inducing):
            raise ValueError("weight vector length must equal the cluster count")
        if self.sigma_inverses is None:
            self.sigma_inverses = (
                np.linalg.inv(self.inducing.covariances) if len(self.inducing) else np.zeros((0, 3, 3))
            )
        self.sigma_inverses = np.ascontiguousarray(self.sigma_inverses, dtype=np.float64)
        self._grid = None

    @classmethod
    def zeros(cls, inducing: InducingSet, **kw) -> "OccupancyModel":
        return cls(inducing, np.zeros(len(inducing)), **kw)

    @property
    def means(self) -> np.ndarray:
        return np.ascontiguousarray(self.inducing.means, dtype=np.float64)

    @property
    def dense(self) -> bool:
        return math.isinf(self.kernel_cutoff)

    def grid(self):
        """Lazily built spatial hash: (cell, start, items, cells)."""
        if self._grid is None:
            means = self.means
            med = float(np.median(np.linalg.norm(means, axis=1))) if len(means) else 0.0
            cell = self.kernel_cutoff * (1.0 + med / self.cutoff_d0)
            start, items, cells = _kernels.build_grid(means, cell, _kernels.table_size(len(means)))
            self._grid = (cell, start, items, cells)
        return self._grid

    def _grid_args(self):
        cell, start, items, cells = self.grid()
        return (self.means, self.sigma_inverses, float(self.kernel_cutoff),
                float(self.cutoff_d0), cell, start, items, cells)

    def features(self, xs) -> sp.csr_matrix:
        """Sparse (N, M) feature matrix for query points ``xs``."""
        xs = np.ascontiguousarray(xs, dtype=np.float64).reshape(-1, 3)
        m = len(self.inducing)
        if m == 0:
            return sp.csr_matrix((len(xs), 0))
        if self.dense:
            return sp.csr_matrix(dense_features(xs, self.means, self.sigma_inverses))
        indptr, indices, data = _kernels.feature_rows(xs, *self._grid_args())
        return sp.csr_matrix((data, indices, indptr), shape=(len(xs), m))

    def logits(self, xs) -> np.ndarray:
        xs = np.ascontiguousarray(xs, dtype=np.float64).reshape(-1, 3)
        if len(self.inducing) == 0:
            return np.zeros(len(xs))
        if self.dense:
            return dense_features(xs, self.means, self.sigma_inverses) @ self.w
        return _kernels.logits_at(xs, self.w, *self._grid_args())

    def occupancy(self, xs) -> np.ndarray:
        return 1.0 - _nonoccupancy_from_logit(self.logits(xs))

    def save(self, path) -> None:
        save_model(self, path)


def kernel(x, mu, sigma_inverse) -> float:
    """Squared-exponential kernel ``exp(-0.5 (x-mu)^T S^-1 (x-mu))``."""
    diff = np.asarray(x, dtype=np.float64) - np.asarray(mu, dtype=np.float64)
    return float(np.exp(-0.5 * diff @ np.asarray(sigma_inverse) @ diff))


def dense_features(xs: np.ndarray, means: np.ndarray, sigma_inverses: np.ndarray) -> np.ndarray:
    diff = xs[:, None, :] - means[None, :, :]
    q = np.einsum("nmi,mij,nmj->nm", diff, sigma_inverses, diff)
    return np.exp(-0.5 * q)


def feature_vector(x, model: OccupancyModel) -> np.ndarray:
    """Kernel evaluations of one point against every cluster, zero beyond the cutoff."""
    return model.features(np.asarray(x, dtype=np.float64)[None, :]).toarray()[0]


def _nonoccupancy_from_logit(a):
    a = np.asarray(a, dtype=np.float64)
    # 1 / (1 + exp(a)) without overflow
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def nonoccupancy_probability(x, model: OccupancyModel) -> float:
    return float(_nonoccupancy_from_logit(model.logits(np.asarray(x)[None, :])[0]))


def occupancy_probability(x, model: OccupancyModel) -> float:
    return 1.0 - nonoccupancy_probability(x, model)


def _as_csr(features) -> sp.csr_matrix:
    return features if sp.issparse(features) else sp.csr_matrix(np.atleast_2d(features))


def nll_loss(w, samples: Samples, features, l1_weight: float = 0.0, l2_weight: float = 0.0) -> float:
    """Summed logistic loss plus ``l1 |w|_1 + l2 |w|_2^2``."""
    w = np.asarray(w, dtype=np.float64)
    a = _as_csr(features) @ w
    data = np.logaddexp(0.0, -samples.y * a).sum()
    return float(data + l1_weight * np.abs(w).sum() + l2_weight * w @ w)


def nll_gradient(w, samples: Samples, features, l1_weight: float = 0.0, l2_weight: float = 0.0) -> np.ndarray:
    """Gradient of :func:`nll_loss`; the l1 subgradient at 0 is 0."""
    w = np.asarray(w, dtype=np.float64)
    phi = _as_csr(features)
    a = phi @ w
    # sigmoid(-y a) computed stably
    coef = -samples.y * np.exp(-np.logaddexp(0.0, samples.y * a))
    return phi.T @ coef + l1_weight * np.sign(w) + 2.0 * l2_weight * w


def train(samples: Samples, inducing: InducingSet, config: TrainingConfig = TrainingConfig(),
          kernel_cutoff: float = CUTOFF_RADII * DEFAULT_TAU,
          cutoff_d0: float = DEFAULT_D0) -> OccupancyModel:
    """Fit weights from zero by seeded mini-batch SGD.

    The model's ``loss_history`` holds the full-dataset loss before training
    and after every epoch.
    """
    if not isinstance(samples, Samples):
        samples = Samples.from_list(samples)
    if not (np.any(samples.y > 0) and np.any(samples.y < 0)):
        raise DegenerateTrainingError("training needs samples of both labels")
    model = OccupancyModel.zeros(inducing, kernel_cutoff=kernel_cutoff, cutoff_d0=cutoff_d0)
    phi = model.features(samples.x)
    indptr = phi.indptr.astype(np.int64)
    indices = phi.indices.astype(np.int64)
    data = phi.data.astype(np.float64)
    w = model.w
    rng = np.random.default_rng(config.seed)
    history = [_kernels.full_loss(w, samples.y, indptr, indices, data, config.l1_weight, config.l2_weight)]
    for epoch in range(config.epochs):
        perm = rng.permutation(len(samples))
        _kernels.sgd_epoch(w, samples.y, indptr, indices, data, perm, config.learning_rate,
                           config.batch_size, config.l1_weight, config.l2_weight)
        history.append(_kernels.full_loss(w, samples.y, indptr, indices, data,
                                          config.l1_weight, config.l2_weight))
        logger.debug("epoch %d loss %.6g", epoch + 1, history[-1])
    model.loss_history = history
    return model


def generate_training_samples(cloud: PointCloud | np.ndarray, sensor_origin=(0.0, 0.0, 0.0),
                              free_spacing: float = 1.0, seed: int = 0,
                              near_margin: float = 1.0, far_margin: float = 0.5) -> Samples:
    """Label beam endpoints occupied and points along each beam free.

    Free samples sit every ``free_spacing`` meters from ``near_margin`` out to
    ``far_margin`` short of the endpoint.  ``seed`` shuffles the output order.
    """
    if free_spacing <= 0:
        raise ValueError("free_spacing must be positive")
    pts = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    origin = np.asarray(sensor_origin, dtype=np.float64)
    vec = pts - origin
    length = np.linalg.norm(vec, axis=1)
    # placements t = near + k * spacing with t <= length - far
    n_free = np.floor((length - far_margin - near_margin) / free_spacing + 1e-9).astype(np.int64) + 1
    n_free = np.where(length - far_margin >= near_margin, np.maximum(n_free, 0), 0)
    beam = np.repeat(np.arange(len(pts)), n_free)
    k = np.arange(n_free.sum()) - np.repeat(np.cumsum(n_free) - n_free, n_free)
    t = near_margin + k * free_spacing
    free = origin + vec[beam] * (t / length[beam])[:, None]
    x = np.vstack([pts, free])
    y = np.concatenate([np.ones(len(pts)), -np.ones(len(free))])
    order = np.random.default_rng(seed).permutation(len(y))
    return Samples(x[order], y[order])


def save_model(model: OccupancyModel, path) -> None:
    np.savez(
        path,
        format_version=np.array(MODEL_FORMAT_VERSION, dtype=np.int64),
        means=model.inducing.means,
        covariances=model.inducing.covariances,
        counts=model.inducing.counts,
        weights=model.w,
        sigma_inverses=model.sigma_inverses,
        kernel_cutoff=np.array(model.kernel_cutoff, dtype=np.float64),
        cutoff_d0=np.array(model.cutoff_d0, dtype=np.float64),
    )


def load_model(path) -> OccupancyModel:
    if isinstance(path, (bytes, bytearray)):
        path = io.BytesIO(path)
    with np.load(path) as z:
        version = int(z["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {version}")
        inducing = InducingSet(z["means"], z["covariances"], z["counts"])
        return OccupancyModel(
            inducing,
            z["weights"],
            kernel_cutoff=float(z["kernel_cutoff"]),
            cutoff_d0=float(z["cutoff_d0"]),
            sigma_inverses=z["sigma_inverses"],
        )
