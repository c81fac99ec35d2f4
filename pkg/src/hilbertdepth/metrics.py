"""Depth evaluation: threshold accuracies, relative errors and RMSE under a
range cap, pixel-pooled aggregation, the Garg crop and bilinear resizing."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .densify import DepthImage

PRED_FLOOR = 1e-3
GARG_ROWS = (0.40810811, 0.99189189)
GARG_COLS = (0.03594771, 0.96405229)
METRIC_NAMES = ("abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3")


class EmptyMaskError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float
    valid_count: int
    cap: float
    # per-pixel sums behind the metrics, kept so reports can be pooled
    sums: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_sums(cls, sums: dict, count: int, cap: float) -> "MetricsReport":
        return cls(
            abs_rel=sums["abs_rel"] / count,
            sq_rel=sums["sq_rel"] / count,
            rmse=math.sqrt(sums["sq"] / count),
            rmse_log=math.sqrt(sums["sq_log"] / count),
            delta1=sums["d1"] / count,
            delta2=sums["d2"] / count,
            delta3=sums["d3"] / count,
            valid_count=count,
            cap=cap,
            sums=dict(sums),
        )

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("sums")
        return out

    def to_kv(self, name: str = "") -> str:
        head = f"name={name} " if name else ""
        return head + " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                               for k, v in self.as_dict().items())

    def to_json(self, name: str = "") -> str:
        return json.dumps({"name": name, **self.as_dict()}, sort_keys=True)


def _arr(img) -> np.ndarray:
    return img.values if isinstance(img, DepthImage) else np.asarray(img, dtype=np.float64)


def eval_metrics(pred, gt, cap: float = 80.0) -> MetricsReport:
    """Metrics over pixels with 0 < gt <= cap, predictions clamped to [0.001, cap]."""
    p = _arr(pred)
    g = _arr(gt)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs ground truth {g.shape}")
    if not cap > 0:
        raise ValueError("cap must be positive")
    mask = (g > 0) & (g <= cap)
    count = int(np.count_nonzero(mask))
    if count == 0:
        raise EmptyMaskError("no valid ground-truth pixels under the cap")
    g = g[mask]
    p = np.clip(p[mask], PRED_FLOOR, cap)
    ratio = np.maximum(p / g, g / p)
    diff = p - g
    log_diff = np.log(p) - np.log(g)
    sums = {
        "abs_rel": float(np.sum(np.abs(diff) / g)),
        "sq_rel": float(np.sum(diff ** 2 / g)),
        "sq": float(diff @ diff),
        "sq_log": float(log_diff @ log_diff),
        "d1": int(np.count_nonzero(ratio < 1.25)),
        "d2": int(np.count_nonzero(ratio < 1.25 ** 2)),
        "d3": int(np.count_nonzero(ratio < 1.25 ** 3)),
    }
    return MetricsReport.from_sums(sums, count, float(cap))


def aggregate_reports(reports, pooled: bool = True) -> MetricsReport:
    """Combine per-image reports.

    Pooled (default) weights every valid pixel equally across images;
    otherwise each image's metrics are averaged.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    caps = {r.cap for r in reports}
    if len(caps) != 1:
        raise ProtocolError(f"reports use different caps: {sorted(caps)}")
    cap = caps.pop()
    if len(reports) == 1:
        return reports[0]
    total = sum(r.valid_count for r in reports)
    if pooled:
        sums = {k: sum(r.sums[k] for r in reports) for k in reports[0].sums}
        return MetricsReport.from_sums(sums, total, cap)
    mean = {name: float(np.mean([getattr(r, name) for r in reports])) for name in METRIC_NAMES}
    return MetricsReport(**mean, valid_count=total, cap=cap)


def central_crop(img):
    """Garg crop: rows [0.408 h, 0.992 h) and columns [0.036 w, 0.964 w)."""
    a = _arr(img)
    h, w = a.shape
    r0, r1 = int(GARG_ROWS[0] * h), int(GARG_ROWS[1] * h)
    c0, c1 = int(GARG_COLS[0] * w), int(GARG_COLS[1] * w)
    out = a[r0:r1, c0:c1]
    return DepthImage(out) if isinstance(img, DepthImage) else out.copy()


def _axis_weights(n_src: int, n_dst: int):
    if n_dst == 1 or n_src == 1:
        pos = np.zeros(n_dst)
    else:
        pos = np.arange(n_dst) * (n_src - 1) / (n_dst - 1)
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, n_src - 1)
    i1 = np.minimum(i0 + 1, n_src - 1)
    frac = pos - i0
    return i0, i1, frac


def bilinear_resize(img, new_width: int, new_height: int):
    """Corner-aligned bilinear resampling.

    An output pixel is invalid when any source neighbour carrying nonzero
    weight is invalid.
    """
    a = _arr(img)
    h, w = a.shape
    y0, y1, fy = _axis_weights(h, new_height)
    x0, x1, fx = _axis_weights(w, new_width)
    fy = fy[:, None]
    fx = fx[None, :]
    v00 = a[np.ix_(y0, x0)]
    v01 = a[np.ix_(y0, x1)]
    v10 = a[np.ix_(y1, x0)]
    v11 = a[np.ix_(y1, x1)]
    out = (v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx
           + v10 * fy * (1 - fx) + v11 * fy * fx)
    bad = ((v00 <= 0)
           | ((v01 <= 0) & (fx > 0))
           | ((v10 <= 0) & (fy > 0))
           | ((v11 <= 0) & (fx > 0) & (fy > 0)))
    out = np.where(bad, 0.0, out)
    return DepthImage(out) if isinstance(img, DepthImage) else out
