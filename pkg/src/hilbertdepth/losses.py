"""Depth-map training losses (MSE, scale-invariant, adaptive BerHu) with
analytic gradients.  Every loss is a mean over pixels where the reference
depth is valid (> 0)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densify import DepthImage


class EmptyMaskError(ValueError):
    pass


class DomainError(ValueError):
    pass


LOSSES = ("mse", "eigen", "berhu")


@dataclass(frozen=True)
class DepthPair:
    prediction: np.ndarray
    ground_truth: np.ndarray

    def __post_init__(self):
        y = _values(self.prediction)
        ys = _values(self.ground_truth)
        if y.shape != ys.shape:
            raise ValueError(f"shape mismatch {y.shape} vs {ys.shape}")
        object.__setattr__(self, "prediction", y)
        object.__setattr__(self, "ground_truth", ys)

    @property
    def mask(self) -> np.ndarray:
        return self.ground_truth > 0


def _values(img) -> np.ndarray:
    if isinstance(img, DepthImage):
        return img.values
    return np.atleast_2d(np.asarray(img, dtype=np.float64))


def _pair(pred, gt) -> DepthPair:
    return pred if isinstance(pred, DepthPair) and gt is None else DepthPair(pred, gt)


def _masked(pair: DepthPair):
    mask = pair.mask
    n = int(np.count_nonzero(mask))
    if n == 0:
        raise EmptyMaskError("no valid reference pixels")
    return mask, n


def loss_mse(pred, gt=None) -> float:
    pair = _pair(pred, gt)
    mask, n = _masked(pair)
    r = pair.prediction[mask] - pair.ground_truth[mask]
    return float(r @ r / n)


def _log_diff(pair: DepthPair, mask):
    y = pair.prediction
    if np.any(y[mask] <= 0):
        raise DomainError("prediction must be positive wherever the reference is valid")
    d = np.zeros_like(y)
    d[mask] = np.log(y[mask]) - np.log(pair.ground_truth[mask])
    return d


def _forward_pairs(mask):
    """Masks of pixels whose right / lower neighbour is also valid."""
    right = np.zeros_like(mask)
    right[:, :-1] = mask[:, :-1] & mask[:, 1:]
    down = np.zeros_like(mask)
    down[:-1, :] = mask[:-1, :] & mask[1:, :]
    return right, down


def loss_eigen(pred, gt=None, lam: float = 0.5) -> float:
    """Scale-invariant log error with a first-order gradient matching term."""
    pair = _pair(pred, gt)
    mask, n = _masked(pair)
    d = _log_diff(pair, mask)
    right, down = _forward_pairs(mask)
    gx = (d[:, 1:] - d[:, :-1])[right[:, :-1]]
    gy = (d[1:, :] - d[:-1, :])[down[:-1, :]]
    dv = d[mask]
    return float(dv @ dv / n - lam * dv.sum() ** 2 / n ** 2 + (gx @ gx + gy @ gy) / n)


def berhu_threshold(pair: DepthPair, mask) -> float:
    return 0.2 * float(np.max(np.abs(pair.prediction[mask] - pair.ground_truth[mask])))


def berhu_penalty(x, c: float):
    """Per-residual BerHu term: |x| up to c, (x^2 + c^2) / 2c beyond."""
    ax = np.abs(x)
    if c == 0:
        return np.zeros_like(ax)
    return np.where(ax <= c, ax, (ax * ax + c * c) / (2 * c))


def loss_berhu(pred, gt=None) -> float:
    pair = _pair(pred, gt)
    mask, n = _masked(pair)
    c = berhu_threshold(pair, mask)
    if c == 0:
        return 0.0
    x = pair.prediction[mask] - pair.ground_truth[mask]
    return float(berhu_penalty(x, c).sum() / n)


def loss_gradient(loss_id: str, pred, gt=None, lam: float = 0.5) -> np.ndarray:
    """Gradient of a loss with respect to the prediction map.

    Invalid pixels get zero gradient; the BerHu threshold is held constant.
    """
    pair = _pair(pred, gt)
    mask, n = _masked(pair)
    grad = np.zeros_like(pair.prediction)
    if loss_id == "mse":
        grad[mask] = 2.0 * (pair.prediction[mask] - pair.ground_truth[mask]) / n
    elif loss_id == "eigen":
        d = _log_diff(pair, mask)
        right, down = _forward_pairs(mask)
        gd = np.zeros_like(d)
        gd[mask] = 2.0 * d[mask] / n - 2.0 * lam * d[mask].sum() / n ** 2
        dx = np.where(right[:, :-1], d[:, 1:] - d[:, :-1], 0.0)
        gd[:, 1:] += 2.0 * dx / n
        gd[:, :-1] -= 2.0 * dx / n
        dy = np.where(down[:-1, :], d[1:, :] - d[:-1, :], 0.0)
        gd[1:, :] += 2.0 * dy / n
        gd[:-1, :] -= 2.0 * dy / n
        grad[mask] = gd[mask] / pair.prediction[mask]
    elif loss_id == "berhu":
        c = berhu_threshold(pair, mask)
        if c > 0:
            x = pair.prediction[mask] - pair.ground_truth[mask]
            grad[mask] = np.where(np.abs(x) <= c, np.sign(x), x / c) / n
    else:
        raise ValueError(f"unknown loss {loss_id!r}; expected one of {LOSSES}")
    return grad
