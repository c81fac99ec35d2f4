"""Distance-adaptive Quick-Means clustering into Gaussian inducing points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .pointcloud import PointCloud

DEFAULT_TAU = 0.3
DEFAULT_D0 = 20.0
DEFAULT_EPSILON = 1e-3


class EmptyInputError(ValueError):
    pass


@dataclass(frozen=True)
class InducingSet:
    """Cluster means (M, 3), covariances (M, 3, 3) and member counts (M,).

    ``labels`` maps every input point to its cluster and ``founders`` holds
    the index of the point that opened each cluster.
    """

    means: np.ndarray
    covariances: np.ndarray
    counts: np.ndarray
    labels: np.ndarray | None = None
    founders: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.means)

    @classmethod
    def from_moments(cls, means, covariances) -> "InducingSet":
        means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
        covs = np.asarray(covariances, dtype=np.float64).reshape(-1, 3, 3)
        return cls(means, covs, np.ones(len(means), dtype=np.int64))


def cluster_radius(d, tau: float = DEFAULT_TAU, d0: float = DEFAULT_D0):
    """Cluster radius ``tau * (1 + d / d0)`` at distance ``d`` from the sensor."""
    return tau * (1.0 + np.asarray(d, dtype=np.float64) / d0)


def cluster_moments(points, epsilon: float = DEFAULT_EPSILON) -> tuple[np.ndarray, np.ndarray]:
    """Mean and floored sample covariance of one group of points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyInputError("cluster_moments needs at least one point")
    mu = pts.mean(axis=0)
    centered = pts - mu
    sigma = centered.T @ centered / max(len(pts) - 1, 1)
    sigma = 0.5 * (sigma + sigma.T) + epsilon * np.eye(3)
    return mu, sigma


def _grouped_moments(pts: np.ndarray, labels: np.ndarray, m: int, epsilon: float):
    counts = np.bincount(labels, minlength=m)
    means = np.zeros((m, 3))
    np.add.at(means, labels, pts)
    means /= counts[:, None]
    centered = pts - means[labels]
    outer = centered[:, :, None] * centered[:, None, :]
    covs = np.zeros((m, 3, 3))
    np.add.at(covs, labels, outer)
    covs /= np.maximum(counts - 1, 1)[:, None, None]
    covs = 0.5 * (covs + covs.transpose(0, 2, 1)) + epsilon * np.eye(3)
    return means, covs, counts


def quick_means(cloud: PointCloud | np.ndarray, tau: float = DEFAULT_TAU, d0: float = DEFAULT_D0,
                seed: int = 0, epsilon: float = DEFAULT_EPSILON) -> InducingSet:
    """Greedy first-fit clustering in a seeded-shuffled point order.

    A point joins the earliest-founded cluster whose founding point lies
    within ``cluster_radius(|point|)`` of it, otherwise it founds a new one.
    """
    pts = cloud.xyz if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyInputError("cannot cluster an empty point cloud")
    if tau <= 0 or d0 <= 0:
        raise ValueError("tau and d0 must be positive")
    order = np.random.default_rng(seed).permutation(len(pts))
    pts = np.ascontiguousarray(pts)
    labels, founders = _kernels.greedy_assign(
        pts, order, float(tau), float(d0), float(tau), _kernels.table_size(len(pts))
    )
    means, covs, counts = _grouped_moments(pts, labels, len(founders), epsilon)
    return InducingSet(means, covs, counts, labels, founders)
