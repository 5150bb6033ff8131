"""Winner-takes-all and one-view occlusion detection on a single marginal volume.

The vertical minimum of column ``(x, y)`` gives the left solution ``s_L``.
Re-reading the left volume as a right-view volume (right column
``x_R = x - s``), the right solution minimises along the sheared ray that
passes through the left solution point.  A visible pixel sees both rays meet
at the same label; where they disagree the pixel is occluded and gets the
smaller of the two labels, since an occluded surface lies behind its
occluder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CostVolume, DataError, DisparityMap, OcclusionMap


def _values(marginals) -> np.ndarray:
    v = marginals.values if isinstance(marginals, CostVolume) else np.asarray(marginals, dtype=np.float64)
    if v.ndim != 3 or not np.all(np.isfinite(v)):
        raise DataError("marginals must be a finite HxWxL volume")
    return v


def _to_disparity(labels: np.ndarray, marginals) -> DisparityMap:
    if isinstance(marginals, CostVolume):
        return DisparityMap(marginals.label_to_disparity(labels).astype(np.float64))
    return DisparityMap(labels.astype(np.float64))


def wta_labels(marginals) -> np.ndarray:
    return np.argmin(_values(marginals), axis=2)


def wta(marginals) -> DisparityMap:
    return _to_disparity(wta_labels(marginals), marginals)


def right_view_labels(marginals, shear: str = "intersect", s_left: np.ndarray | None = None) -> np.ndarray:
    """Per-pixel argmin along a sheared direction, ties to the lowest label.

    ``shear="intersect"`` scans the line ``(x - s_L(x) + s, y, s)``, i.e. the
    right-view ray through the left solution point, so it meets the vertical
    ray exactly at ``s_L`` when the pixel is visible in both views.
    ``shear="literal"`` scans ``(x - s, y, s)``.  Cells whose column leaves the
    image are skipped.
    """
    v = _values(marginals)
    h, w, n = v.shape
    if shear == "literal":
        offset = np.zeros((h, w), dtype=np.int64)
        sign = -1
    elif shear == "intersect":
        sl = wta_labels(v) if s_left is None else np.asarray(s_left, dtype=np.int64)
        if sl.shape != (h, w):
            raise DataError("left solution shape does not match the marginals")
        offset = -sl
        sign = 1
    else:
        raise ValueError(f"unknown shear {shear!r}")
    xs = np.arange(w)[None, :] + offset
    rows = np.broadcast_to(np.arange(h)[:, None], (h, w))
    best = np.full((h, w), np.inf)
    arg = np.zeros((h, w), dtype=np.int64)
    for s in range(n):
        cols = xs + sign * s
        ok = (cols >= 0) & (cols < w)
        cand = np.full((h, w), np.inf)
        cand[ok] = v[rows[ok], cols[ok], s]
        better = cand < best
        best[better] = cand[better]
        arg[better] = s
    return arg


def right_view_solution(marginals, shear: str = "intersect") -> DisparityMap:
    return _to_disparity(right_view_labels(marginals, shear), marginals)


def detect_and_fill(s_left, s_right):
    """Occluded where the two solutions differ; fused value is their minimum."""
    a = s_left.values if isinstance(s_left, DisparityMap) else np.asarray(s_left)
    b = s_right.values if isinstance(s_right, DisparityMap) else np.asarray(s_right)
    if a.shape != b.shape:
        raise DataError("left and right solutions differ in shape")
    occ = OcclusionMap(a != b)
    fused = np.minimum(a, b)
    if isinstance(s_left, DisparityMap):
        return occ, DisparityMap(fused)
    return occ, fused


@dataclass(frozen=True)
class OvodSolution:
    s_left: DisparityMap
    s_right: DisparityMap
    occlusion: OcclusionMap
    fused: DisparityMap
    fused_labels: np.ndarray


def ovod(marginals, shear: str = "intersect") -> OvodSolution:
    """Full one-view solution.

    Detection compares label indices (before any sub-pixel step); the fused
    label is mapped back to a disparity afterwards.
    """
    ll = wta_labels(marginals)
    rl = right_view_labels(marginals, shear, ll)
    occ, fused = detect_and_fill(ll, rl)
    return OvodSolution(
        s_left=_to_disparity(ll, marginals),
        s_right=_to_disparity(rl, marginals),
        occlusion=occ,
        fused=_to_disparity(fused, marginals),
        fused_labels=fused,
    )

