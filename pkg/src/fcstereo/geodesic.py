"""Geodesic-distance affinities and the recursive calculation-tree filter.

The affinity between two pixels is a product of per-edge factors
``exp(-a * (|I_q - I_p| + delta))`` along a path on the 4-connected grid.
The filter restricts paths to a comb-shaped spanning tree per target pixel
``q``: from a source ``p`` walk horizontally along the row of ``p`` until the
column of ``q`` is reached, then vertically along that column to ``q``.  The
four quadrants of this tree share the row and the column of ``q``; summing
them as ``up + down - row`` counts each source exactly once, and the whole
thing is four 1-D recursive passes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, GuideImage, ParameterError


@dataclass(frozen=True)
class AffinityParams:
    a: float
    delta: float

    def __post_init__(self):
        if not (self.a > 0 and np.isfinite(self.a)):
            raise ParameterError("range coefficient a must be positive")
        if not (self.delta >= 0 and np.isfinite(self.delta)):
            raise ParameterError("space term delta must be non-negative")


def affinity_from_sigmas(sigma_r: float, sigma_s: float) -> AffinityParams:
    """Bilateral-equivalent parameters: ``a = 2 / sigma_r**2``, ``delta = sigma_r**2 / sigma_s**2``."""
    if not (sigma_r > 0 and sigma_s > 0):
        raise ParameterError("sigma_r and sigma_s must be positive")
    return AffinityParams(a=2.0 / sigma_r**2, delta=sigma_r**2 / sigma_s**2)


@dataclass(frozen=True)
class EdgeWeightField:
    """Symmetric grid-edge weights.

    ``horizontal[y, x]`` links ``(x, y)`` and ``(x + 1, y)``;
    ``vertical[y, x]`` links ``(x, y)`` and ``(x, y + 1)``.
    """

    horizontal: np.ndarray
    vertical: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.vertical.shape[0] + 1, self.horizontal.shape[1] + 1

    def left(self) -> np.ndarray:
        """Weight to the left neighbour, per pixel (0 where none exists)."""
        h, w = self.shape
        out = np.zeros((h, w))
        out[:, 1:] = self.horizontal
        return out

    def right(self) -> np.ndarray:
        h, w = self.shape
        out = np.zeros((h, w))
        out[:, :-1] = self.horizontal
        return out

    def up(self) -> np.ndarray:
        h, w = self.shape
        out = np.zeros((h, w))
        out[1:, :] = self.vertical
        return out

    def down(self) -> np.ndarray:
        h, w = self.shape
        out = np.zeros((h, w))
        out[:-1, :] = self.vertical
        return out

    def flipped(self, flip_y: bool, flip_x: bool) -> "EdgeWeightField":
        hz, vt = self.horizontal, self.vertical
        if flip_y:
            hz, vt = hz[::-1], vt[::-1]
        if flip_x:
            hz, vt = hz[:, ::-1], vt[:, ::-1]
        return EdgeWeightField(np.ascontiguousarray(hz), np.ascontiguousarray(vt))


def build_edge_weights(guide: GuideImage, params: AffinityParams) -> EdgeWeightField:
    px = guide.pixels
    dh = np.sqrt(np.sum((px[:, 1:] - px[:, :-1]) ** 2, axis=2))
    dv = np.sqrt(np.sum((px[1:, :] - px[:-1, :]) ** 2, axis=2))
    return EdgeWeightField(
        horizontal=np.exp(-params.a * (dh + params.delta)),
        vertical=np.exp(-params.a * (dv + params.delta)),
    )


def _as_edges(guide, params) -> EdgeWeightField:
    if isinstance(guide, EdgeWeightField):
        return guide
    if params is None:
        raise ParameterError("affinity parameters are required with a guide image")
    return build_edge_weights(guide, params)


def row_sums(field: np.ndarray, horizontal: np.ndarray):
    """Left and right recursive row accumulations, each including the pixel itself."""
    w = field.shape[1]
    hz = horizontal.reshape(horizontal.shape + (1,) * (field.ndim - 2))
    left = np.empty_like(field)
    right = np.empty_like(field)
    left[:, 0] = field[:, 0]
    for x in range(1, w):
        left[:, x] = field[:, x] + hz[:, x - 1] * left[:, x - 1]
    right[:, w - 1] = field[:, w - 1]
    for x in range(w - 2, -1, -1):
        right[:, x] = field[:, x] + hz[:, x] * right[:, x + 1]
    return left, right


def column_sums(rows: np.ndarray, vertical: np.ndarray):
    """Top-down and bottom-up recursive accumulations of row results."""
    h = rows.shape[0]
    vt = vertical.reshape(vertical.shape + (1,) * (rows.ndim - 2))
    up = np.empty_like(rows)
    down = np.empty_like(rows)
    up[0] = rows[0]
    for y in range(1, h):
        up[y] = rows[y] + vt[y - 1] * up[y - 1]
    down[h - 1] = rows[h - 1]
    for y in range(h - 2, -1, -1):
        down[y] = rows[y] + vt[y] * down[y + 1]
    return up, down


def tree_sum(field: np.ndarray, edges: EdgeWeightField) -> np.ndarray:
    """Unnormalised sum over all sources with comb-tree weights."""
    left, right = row_sums(field, edges.horizontal)
    rows = left + right - field
    up, down = column_sums(rows, edges.vertical)
    return up + down - rows


def gd_filter(field, guide, params: AffinityParams | None = None, normalize: bool = False):
    """Geodesic tree filter.

    ``field`` is ``(H, W)`` or ``(H, W, L)``; ``guide`` is a
    :class:`GuideImage` (with ``params``) or a precomputed
    :class:`EdgeWeightField`.  Returns ``(filtered, weight_sum)`` where
    ``filtered`` is ``sum_p w_pq f_p`` (divided by ``weight_sum`` when
    ``normalize``) and ``weight_sum`` is ``W_q = sum_p w_pq``.
    """
    edges = _as_edges(guide, params)
    f = np.asarray(field, dtype=np.float64)
    if f.ndim not in (2, 3) or f.shape[:2] != edges.shape:
        raise DataError(f"field shape {f.shape} does not match guide shape {edges.shape}")
    total = tree_sum(f, edges)
    weight = tree_sum(np.ones(edges.shape), edges)
    if normalize:
        total = total / (weight if f.ndim == 2 else weight[:, :, None])
    return total, weight


def weight_sum(guide, params: AffinityParams | None = None) -> np.ndarray:
    edges = _as_edges(guide, params)
    return tree_sum(np.ones(edges.shape), edges)
