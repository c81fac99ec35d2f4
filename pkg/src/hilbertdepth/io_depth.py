"""KITTI-convention 16-bit depth PNGs (value = round(depth * 256), 0 = invalid)
and sparsity statistics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .densify import DepthImage

SCALE = 256.0
INVALID_CODE = 0
MAX_DEPTH = 65535 / SCALE


class DepthRangeError(ValueError):
    pass


class DepthFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DepthPngCodec:
    scale: float = SCALE
    invalid_code: int = INVALID_CODE

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def encode(self, img: DepthImage) -> np.ndarray:
        v = img.values if isinstance(img, DepthImage) else np.asarray(img, dtype=np.float64)
        codes = np.rint(v * self.scale)
        if np.any(codes > 65535):
            raise DepthRangeError(f"depth exceeds {65535 / self.scale:.4f} m")
        valid = v > 0
        # tiny positive depths must not collapse into the invalid code
        codes = np.where(valid, np.maximum(codes, 1), self.invalid_code)
        return codes.astype(np.uint16)

    def decode(self, codes: np.ndarray) -> DepthImage:
        codes = np.asarray(codes)
        return DepthImage(np.where(codes == self.invalid_code, 0.0, codes / self.scale))


def write_depth_png(img: DepthImage, path, codec: DepthPngCodec = DepthPngCodec()) -> None:
    codes = codec.encode(img)
    try:
        Image.fromarray(codes).save(Path(path), format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write depth PNG {path}: {exc}") from exc


def read_depth_png(path, codec: DepthPngCodec = DepthPngCodec()) -> DepthImage:
    with Image.open(Path(path)) as im:
        if im.format != "PNG" or im.mode not in ("I;16", "I;16B", "I;16L"):
            raise DepthFormatError(f"{path}: expected a 16-bit single-channel PNG, got mode {im.mode}")
        codes = np.array(im, dtype=np.uint16)
    return codec.decode(codes)


def valid_fraction(img) -> float:
    v = img.values if isinstance(img, DepthImage) else np.asarray(img)
    return float(np.count_nonzero(v > 0)) / v.size if v.size else 0.0


def downsample_nearest(img, width: int, height: int) -> DepthImage:
    """Nearest-pixel resampling; an output pixel is valid iff its source pixel is."""
    v = img.values if isinstance(img, DepthImage) else np.asarray(img, dtype=np.float64)
    h, w = v.shape
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.int64), w - 1)
    return DepthImage(v[np.ix_(rows, cols)])


def colorize(img, max_depth: float | None = None) -> np.ndarray:
    """RGB uint8 visualization: near is blue, far is red, invalid is black."""
    v = img.values if isinstance(img, DepthImage) else np.asarray(img, dtype=np.float64)
    valid = v > 0
    top = max_depth or (float(v[valid].max()) if valid.any() else 1.0)
    s = np.clip(v / top, 0.0, 1.0)
    rgb = np.stack([
        np.clip(1.5 - np.abs(4 * s - 3), 0, 1),
        np.clip(1.5 - np.abs(4 * s - 2), 0, 1),
        np.clip(1.5 - np.abs(4 * s - 1), 0, 1),
    ], axis=-1)
    rgb[~valid] = 0
    return (rgb * 255).round().astype(np.uint8)


def write_color_png(img, path, max_depth: float | None = None) -> None:
    Image.fromarray(colorize(img, max_depth)).save(Path(path), format="PNG")
