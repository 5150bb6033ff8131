"""Random-dot stereo pairs with two fronto-parallel planes and exact ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DisparityMap, GuideImage


@dataclass(frozen=True)
class Scene:
    left: GuideImage
    right: GuideImage
    gt: DisparityMap
    occluded: np.ndarray  # left pixels with no visible match in the right image
    band: np.ndarray  # occlusion caused by the foreground edge (excludes the image border)
    labels: int


def _texture(rng, h, w, base, contrast):
    noise = rng.uniform(-contrast, contrast, size=(h, w, 3))
    return np.clip(np.asarray(base, dtype=np.float64) + noise, 0, 255)


def two_plane_scene(height: int = 64, width: int = 64, d_bg: int = 2, gap: int = 6, seed: int = 0,
                    fg_cols: tuple[int, int] | None = None, fg_rows: tuple[int, int] | None = None,
                    contrast: float = 60.0, labels: int | None = None) -> Scene:
    """Background plane at ``d_bg``, foreground rectangle at ``d_bg + gap``.

    The two planes carry textures of different mean colour, so depth edges are
    also colour edges.  The foreground defaults to the middle half of the
    columns over the full height.
    """
    rng = np.random.default_rng(seed)
    d_fg = d_bg + gap
    x0, x1 = fg_cols if fg_cols is not None else (width // 3, width - width // 6)
    y0, y1 = fg_rows if fg_rows is not None else (0, height)
    bg_tex = _texture(rng, height, width + d_fg + 1, (70, 90, 170), contrast)
    fg_tex = _texture(rng, height, width + d_fg + 1, (190, 120, 60), contrast)

    xs = np.arange(width)[None, :]
    ys = np.arange(height)[:, None]
    in_fg = (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
    left = np.where(in_fg[:, :, None], fg_tex[:, :width], bg_tex[:, :width])
    gt = np.where(in_fg, float(d_fg), float(d_bg))

    # right pixel xr shows the foreground when xr + d_fg lands in the foreground rectangle
    fg_right = (xs + d_fg >= x0) & (xs + d_fg < x1) & (ys >= y0) & (ys < y1)
    right = np.where(fg_right[:, :, None], fg_tex[:, d_fg:d_fg + width], bg_tex[:, d_bg:d_bg + width])

    match_x = xs - gt.astype(np.int64)
    border = match_x < 0
    hidden_x = np.clip(match_x, 0, width - 1)
    covered = np.take_along_axis(np.broadcast_to(fg_right, (height, width)), hidden_x, axis=1)
    band = ~in_fg & ~border & covered
    occluded = band | border
    n_labels = labels if labels is not None else d_fg + 1 + max(2, gap // 2)
    return Scene(GuideImage(left), GuideImage(right), DisparityMap(gt), occluded, band, n_labels)


def flat_scene(height: int = 32, width: int = 32, disparity: int = 0, seed: int = 0,
               contrast: float = 60.0, labels: int = 4) -> Scene:
    rng = np.random.default_rng(seed)
    tex = _texture(rng, height, width + disparity + 1, (120, 120, 120), contrast)
    left = tex[:, :width]
    right = tex[:, disparity:disparity + width]
    gt = np.full((height, width), float(disparity))
    border = np.arange(width)[None, :].repeat(height, 0) < disparity
    return Scene(GuideImage(left), GuideImage(right), DisparityMap(gt), border,
                 np.zeros_like(border), labels)
