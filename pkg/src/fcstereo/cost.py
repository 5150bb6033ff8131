"""Matching costs: census + absolute-difference baseline, external volumes,
truncation, and downscaling of images and cost volumes."""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .core import CostVolume, DataError, FormatError, GuideImage, ParameterError

CVOL_MAGIC = b"CVOL"
_CVOL_HEADER = struct.Struct("<4sIIIi")


def truncate_cost(raw: CostVolume) -> CostVolume:
    """Element-wise ``min(1.5 c, sqrt(c))``."""
    v = raw.values
    if np.any(v < 0):
        raise DataError("raw matching cost must be non-negative")
    return raw.with_values(np.minimum(1.5 * v, np.sqrt(v)))


def census_transform(gray: np.ndarray, width: int = 9, height: int = 7) -> np.ndarray:
    """Census bit string per pixel: bit set where a neighbour is darker than the centre.

    Bits are ordered row-major over the window, skipping the centre.  Borders
    replicate edge pixels.
    """
    if width % 2 == 0 or height % 2 == 0:
        raise ParameterError("census window sides must be odd")
    if width * height - 1 > 64:
        raise ParameterError("census window too large for 64-bit codes")
    rx, ry = width // 2, height // 2
    g = np.asarray(gray, dtype=np.float64)
    h, w = g.shape
    padded = np.pad(g, ((ry, ry), (rx, rx)), mode="edge")
    code = np.zeros((h, w), dtype=np.uint64)
    for dy in range(-ry, ry + 1):
        for dx in range(-rx, rx + 1):
            if dy == 0 and dx == 0:
                continue
            nb = padded[ry + dy:ry + dy + h, rx + dx:rx + dx + w]
            code = (code << np.uint64(1)) | (nb < g).astype(np.uint64)
    return code


def hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.bitwise_xor(a, b)).astype(np.int64)


def baseline_cost(left: GuideImage, right: GuideImage, labels: int, census_width: int = 9,
                  census_height: int = 7, alpha: float = 0.7, ad_tau: float = 30.0,
                  border_fill: str = "rowmax") -> CostVolume:
    """Census-Hamming + truncated absolute difference, both scaled to [0, 1].

    Cells whose right-image column ``x - s`` falls outside the image get the
    largest in-range cost of their row (``border_fill="rowmax"``) or are
    compared against the first right column (``"clamp"``).
    """
    if left.height != right.height or left.width != right.width:
        raise DataError("left and right images must have equal sizes")
    if labels < 1:
        raise ParameterError("labels must be >= 1")
    if border_fill not in ("rowmax", "clamp"):
        raise ParameterError(f"unknown border_fill {border_fill!r}")
    h, w = left.shape
    nbits = census_width * census_height - 1
    cl = census_transform(left.gray(), census_width, census_height)
    cr = census_transform(right.gray(), census_width, census_height)
    lp, rp = left.pixels, right.pixels
    vol = np.zeros((h, w, labels))
    xs = np.arange(w)
    for s in range(labels):
        xr = np.maximum(xs - s, 0)
        ham = hamming(cl, cr[:, xr]) / nbits
        ad = np.abs(lp - rp[:, xr]).mean(axis=2)
        vol[:, :, s] = alpha * ham + (1 - alpha) * np.minimum(ad, ad_tau) / ad_tau
    if border_fill == "rowmax":
        outside = np.broadcast_to(xs[None, :, None] < np.arange(labels)[None, None, :], vol.shape)
        row_max = np.where(outside, -np.inf, vol).max(axis=(1, 2))
        row_max = np.where(np.isfinite(row_max), row_max, 1.0)
        vol = np.where(outside, row_max[:, None, None], vol)
    return CostVolume(vol)


def _raised_cosine_offsets(M: int, radius: float):
    r = int(math.ceil(radius))
    offs = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            d = math.hypot(dx, dy)
            if d > radius:
                continue
            wk = 0.5 * (1.0 + math.cos(math.pi * d / M))
            if wk > 0:
                offs.append((dy, dx, wk))
    return offs


def downscaled_shape(h: int, w: int, M: int) -> tuple[int, int]:
    return (h - 1) // M + 1, (w - 1) // M + 1


def downscale_field(field: np.ndarray, M: int, radius: float | None = None) -> np.ndarray:
    """Raised-cosine weighted average around each ``z * M`` sample, per trailing channel."""
    if M < 1 or int(M) != M:
        raise ParameterError("scale factor must be an integer >= 1")
    M = int(M)
    radius = float(M) if radius is None else float(radius)
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[:2]
    ho, wo = downscaled_shape(h, w, M)
    zy = np.arange(ho) * M
    zx = np.arange(wo) * M
    num = np.zeros((ho, wo) + f.shape[2:])
    den = np.zeros((ho, wo))
    for dy, dx, wk in _raised_cosine_offsets(M, radius):
        ys, xs = zy + dy, zx + dx
        vy = (ys >= 0) & (ys < h)
        vx = (xs >= 0) & (xs < w)
        if not vy.any() or not vx.any():
            continue
        iy, ix = np.nonzero(vy)[0], np.nonzero(vx)[0]
        num[np.ix_(iy, ix)] += wk * f[np.ix_(ys[iy], xs[ix])]
        den[np.ix_(iy, ix)] += wk
    return num / den.reshape(den.shape + (1,) * (f.ndim - 2))


def downscale_image(img: GuideImage, M: int, radius: float | None = None) -> GuideImage:
    out = downscale_field(img.pixels, M, radius)
    return GuideImage(np.clip(out, 0.0, 255.0))


def pool_labels(cost: CostVolume, M: int) -> CostVolume:
    """Min-pool the label axis by ``M``, remembering the winning disparity."""
    if M < 1:
        raise ParameterError("scale factor must be >= 1")
    v = cost.values
    h, w, n = v.shape
    groups = -(-n // M)
    pad = groups * M - n
    vp = np.concatenate([v, np.full((h, w, pad), np.inf)], axis=2) if pad else v
    vp = vp.reshape(h, w, groups, M)
    idx = np.argmin(vp, axis=3)
    pooled = np.take_along_axis(vp, idx[..., None], axis=3)[..., 0]
    orig = np.arange(groups)[None, None, :] * M + idx
    if cost.argmin_disparity is not None:
        disp = np.take_along_axis(cost.argmin_disparity, orig, axis=2)
    else:
        disp = cost.label_origin + orig * cost.label_step
    return CostVolume(pooled, label_origin=cost.label_origin, label_step=cost.label_step * M,
                      argmin_disparity=disp)


def downscale_cost(cost: CostVolume, M: int, radius: float | None = None) -> CostVolume:
    """Spatial raised-cosine downscale per label plane, then label min-pooling."""
    if cost.argmin_disparity is not None:
        raise DataError("cost volume is already label-pooled")
    spatial = cost.with_values(downscale_field(cost.values, M, radius))
    return pool_labels(spatial, M)


def write_cvol(cost: CostVolume, path) -> None:
    v = cost.values
    h, w, n = v.shape
    body = np.ascontiguousarray(np.transpose(v, (2, 0, 1)), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_CVOL_HEADER.pack(CVOL_MAGIC, w, h, n, int(cost.label_origin)))
        fh.write(body.tobytes())


def read_cvol(path, expect_shape: tuple[int, int] | None = None) -> CostVolume:
    """Read a ``CVOL`` volume; ``expect_shape`` is ``(height, width)`` to check against."""
    data = Path(path).read_bytes()
    if len(data) < _CVOL_HEADER.size:
        raise FormatError(f"{path}: truncated CVOL header")
    magic, w, h, n, origin = _CVOL_HEADER.unpack_from(data)
    if magic != CVOL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if w < 1 or h < 1 or n < 1:
        raise FormatError(f"{path}: empty dimensions {w}x{h}x{n}")
    expected = _CVOL_HEADER.size + 4 * w * h * n
    if len(data) != expected:
        raise FormatError(f"{path}: header declares {w}x{h}x{n} floats "
                          f"({expected} bytes) but file has {len(data)} bytes")
    if expect_shape is not None and (h, w) != tuple(expect_shape):
        raise FormatError(f"{path}: volume is {w}x{h}, expected {expect_shape[1]}x{expect_shape[0]}")
    vals = np.frombuffer(data, dtype="<f4", offset=_CVOL_HEADER.size).reshape(n, h, w)
    if not np.all(np.isfinite(vals)):
        raise FormatError(f"{path}: non-finite cost values")
    return CostVolume(np.transpose(vals, (1, 2, 0)).astype(np.float64), label_origin=origin)
