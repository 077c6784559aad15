"""Geometric normalisation and feature enhancement of fundus images."""

from __future__ import annotations

import math
import warnings

import numpy as np
from skimage import color

MIN_SIDE = 16


def _check_rgb(img: np.ndarray):
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {img.shape}")
    if min(img.shape[:2]) < 1:
        raise ValueError("degenerate image")


def _resize_axis(img: np.ndarray, out: int, axis: int) -> np.ndarray:
    n = img.shape[axis]
    src = (np.arange(out) + 0.5) * (n / out) - 0.5
    src = np.clip(src, 0.0, n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    w = src - lo
    shape = [1] * img.ndim
    shape[axis] = out
    w = w.reshape(shape)
    return np.take(img, lo, axis=axis) * (1.0 - w) + np.take(img, hi, axis=axis) * w


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Half-pixel-centred bilinear resampling; returns float64."""
    out = np.asarray(img, dtype=np.float64)
    out = _resize_axis(out, height, 0)
    return _resize_axis(out, width, 1)


def crop_scale(img: np.ndarray, side: int) -> np.ndarray:
    """Centre square crop on the shorter edge, then bilinear resize to side x side."""
    img = np.asarray(img)
    _check_rgb(img)
    if side < MIN_SIDE:
        raise ValueError(f"side must be >= {MIN_SIDE}, got {side}")
    h, w = img.shape[:2]
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    square = img[y0 : y0 + s, x0 : x0 + s]
    if s == side:
        return square.copy()
    out = resize_bilinear(square, side, side)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# Gaussian / high-boost -------------------------------------------------------


def gaussian_kernel(sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return w / w.sum()


def _blur_axis(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    xp = np.pad(x, pad, mode="symmetric")
    n = x.shape[axis]

    def window(offset):
        return np.take(xp, np.arange(r + offset, r + offset + n), axis=axis)

    # symmetric taps are paired so the result is exactly mirror-equivariant
    out = kernel[r] * window(0)
    for k in range(1, r + 1):
        out = out + kernel[r + k] * (window(-k) + window(k))
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur over the two spatial axes with mirror padding."""
    kernel = gaussian_kernel(sigma)
    out = np.asarray(img, dtype=np.float64)
    out = _blur_axis(out, kernel, 0)
    return _blur_axis(out, kernel, 1)


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.full(x.shape, 0.5)
    return (x - lo) / (hi - lo)


def high_boost(img: np.ndarray, sigma: float, k: float = 4.0, mode: str = "normalize") -> np.ndarray:
    """Add ``k`` times the high-frequency residual back, then rescale to [0, 1].

    ``mode="subtract"`` instead returns the normalised image minus its
    normalised boosted version, rescaled to [0, 1].
    """
    img = np.asarray(img, dtype=np.float64)
    mask = img - gaussian_blur(img, sigma)
    boosted = img + k * mask
    if mode == "normalize":
        return minmax_normalize(boosted)
    if mode == "subtract":
        return minmax_normalize(minmax_normalize(img) - minmax_normalize(boosted))
    raise ValueError(f"unknown high-boost mode {mode!r}")


# CLAHE -------------------------------------------------------------------------


def _tile_bounds(n: int, tiles: int) -> np.ndarray:
    return np.round(np.linspace(0, n, tiles + 1)).astype(int)


def _interp_index(n: int, bounds: np.ndarray):
    centers = (bounds[:-1] + bounds[1:]) / 2.0 - 0.5
    pos = np.interp(np.arange(n), centers, np.arange(len(centers)))
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, len(centers) - 1)
    return i0, i1, pos - i0


def clahe(channel: np.ndarray, clip_limit: float = 2.0, tiles=(8, 8), nbins: int = 256) -> np.ndarray:
    """Contrast-limited adaptive histogram equalisation of a [0, 1] channel.

    ``clip_limit`` is a multiple of the uniform bin height of a tile; excess
    counts are spread evenly over all bins.  Per-tile mappings are blended
    bilinearly between tile centres.
    """
    h, w = channel.shape
    ty, tx = tiles
    if ty < 2 or tx < 2:
        raise ValueError("CLAHE needs at least a 2 x 2 tile grid")
    if clip_limit < 1:
        raise ValueError(f"clip_limit must be >= 1, got {clip_limit}")
    if h < ty or w < tx:
        raise ValueError(f"image {h}x{w} smaller than tile grid {ty}x{tx}")
    bins = np.clip((np.asarray(channel) * (nbins - 1) + 0.5).astype(int), 0, nbins - 1)
    yb, xb = _tile_bounds(h, ty), _tile_bounds(w, tx)
    maps = np.empty((ty, tx, nbins))
    for i in range(ty):
        for j in range(tx):
            tile = bins[yb[i] : yb[i + 1], xb[j] : xb[j + 1]]
            hist = np.bincount(tile.ravel(), minlength=nbins).astype(np.float64)
            limit = max(clip_limit * tile.size / nbins, 1.0)
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit) + excess / nbins
            cdf = np.cumsum(hist)
            maps[i, j] = cdf / cdf[-1]
    y0, y1, wy = _interp_index(h, yb)
    x0, x1, wx = _interp_index(w, xb)
    wy, wx = wy[:, None], wx[None, :]

    def m(ys, xs):
        return maps[ys[:, None], xs[None, :], bins]

    top = m(y0, x0) * (1 - wx) + m(y0, x1) * wx
    bottom = m(y1, x0) * (1 - wx) + m(y1, x1) * wx
    return top * (1 - wy) + bottom * wy


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    return color.rgb2lab(np.asarray(img, dtype=np.float64) / 255.0)


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rgb = color.lab2rgb(lab)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def clahe_lab(lab: np.ndarray, clip_limit: float = 2.0, tiles=(8, 8)) -> np.ndarray:
    """CLAHE on the L channel of a CIELAB array; a and b are passed through."""
    out = lab.copy()
    out[..., 0] = clahe(lab[..., 0] / 100.0, clip_limit, tiles) * 100.0
    return out


def clahe_l(img: np.ndarray, clip_limit: float = 2.0, tiles=(8, 8)) -> np.ndarray:
    _check_rgb(np.asarray(img))
    return lab_to_rgb(clahe_lab(rgb_to_lab(img), clip_limit, tiles))


# augmentation ------------------------------------------------------------------


def augment_flip(img: np.ndarray, rng: np.random.Generator | None = None, flags=None,
                 channels_last: bool = True) -> np.ndarray:
    """Random horizontal and/or vertical flip, each with probability one half.

    ``flags=(horizontal, vertical)`` forces the choice.
    """
    if flags is None:
        flags = (bool(rng.random() < 0.5), bool(rng.random() < 0.5))
    horizontal, vertical = flags
    col_axis, row_axis = (-2, -3) if channels_last else (-1, -2)
    out = img
    if horizontal:
        out = np.flip(out, axis=col_axis)
    if vertical:
        out = np.flip(out, axis=row_axis)
    return np.ascontiguousarray(out)
