"""Fully connected CRF energy and belief propagation on geodesic affinities.

Marginal update (``W_q`` is the tree weight sum, ``m`` the per-pixel
messages)::

    cbar_q(s) = c_q(s) + sum_p w_pq m_p(s) / (W_q - 1) - k * m_q(s)

with ``k = 1 / (W_q - 1)`` ("exact", removes the self contribution from the
normalised sum) or ``k = 1`` ("literal").
A message is the truncated-linear distance transform of a marginal::

    m_p(i) = min_j cbar_p(j) + lam * min(|i - j|, dmax)

Messages are always computed from the marginal shifted to min 0, which
keeps their magnitude bounded.  The marginals themselves are reported
unshifted unless ``normalize`` is set: a per-pixel shift would make values of
different pixels incomparable, and the one-view occlusion scan compares
exactly those.

The non-sequential schedule updates every pixel from the previous
iteration's messages.  The sequential schedule sweeps the image four times
per iteration (TL->BR, BR->TL, TR->BL, BL->TR); at each pixel the tree sum
is assembled from already-updated messages upstream of the sweep and old
messages downstream, so fresh messages feed later pixels of the same sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .core import CostVolume, DataError, GuideImage, NumericError, ParameterError, PipelineParams
from .geodesic import EdgeWeightField, affinity_from_sigmas, build_edge_weights, tree_sum

SWEEPS = ((False, False), (True, True), (False, True), (True, False))  # (flip_y, flip_x)


def binary_potential(i, j, lam: float, delta_max: float):
    return lam * np.minimum(np.abs(np.asarray(i) - np.asarray(j)), delta_max)


@numba.njit(cache=True)
def _dt_inplace(h, out, lam, dmax):
    n = h.shape[0]
    hmin = h[0]
    for i in range(1, n):
        if h[i] < hmin:
            hmin = h[i]
    trunc = hmin + lam * dmax
    # forward sweep: best source j <= i
    best = 0
    for i in range(n):
        if i > 0:
            cand = h[best] + lam * float(i - best)
            if h[i] <= cand:
                best = i
                cand = h[i]
        else:
            cand = h[0]
        out[i] = cand
    best = n - 1
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            cand = h[best] + lam * float(best - i)
            if h[i] <= cand:
                best = i
                cand = h[i]
        else:
            cand = h[n - 1]
        if cand < out[i]:
            out[i] = cand
    for i in range(n):
        if trunc < out[i]:
            out[i] = trunc
    m = out[0]
    for i in range(1, n):
        if out[i] < m:
            m = out[i]
    for i in range(n):
        out[i] -= m


def message_from_marginal(marginal_row, lam: float, delta_max: float) -> np.ndarray:
    """Truncated-linear distance transform of one marginal vector, shifted to min 0."""
    h = np.ascontiguousarray(marginal_row, dtype=np.float64)
    if h.ndim != 1 or not np.all(np.isfinite(h)):
        raise DataError("marginal row must be a finite vector")
    out = np.empty_like(h)
    _dt_inplace(h, out, float(lam), float(delta_max))
    return out


@numba.njit(cache=True)
def _messages_all(marg, lam, dmax):
    h, w, n = marg.shape
    out = np.empty_like(marg)
    for y in range(h):
        for x in range(w):
            _dt_inplace(marg[y, x], out[y, x], lam, dmax)
    return out


def messages_from_marginals(marginals: np.ndarray, lam: float, delta_max: float) -> np.ndarray:
    return _messages_all(np.ascontiguousarray(marginals, dtype=np.float64), float(lam), float(delta_max))


@dataclass
class BPModel:
    """Precomputed affinity structure for one guide image."""

    edges: EdgeWeightField
    weight: np.ndarray
    coef: np.ndarray
    self_coef: np.ndarray
    lam: float
    delta_max: float
    normalize: bool = False  # report marginals shifted to min 0 per pixel

    @classmethod
    def build(cls, guide: GuideImage, params: PipelineParams) -> "BPModel":
        edges = build_edge_weights(guide, affinity_from_sigmas(params.sigma_r, params.sigma_s))
        return cls.from_edges(edges, params.lambda_, params.delta_max, params.self_term,
                              params.normalize_marginals)

    @classmethod
    def from_edges(cls, edges: EdgeWeightField, lam: float, delta_max: float, self_term: str = "exact",
                   normalize: bool = False):
        weight = tree_sum(np.ones(edges.shape), edges)
        excess = weight - 1.0
        if np.any(~(excess > 0)):
            raise NumericError("degenerate affinity: W_q <= 1 (image needs at least two connected pixels)")
        coef = 1.0 / excess
        if self_term == "literal":
            self_coef = np.ones_like(coef)
        elif self_term == "exact":
            self_coef = coef.copy()
        else:
            raise ParameterError(f"unknown self_term {self_term!r}")
        return cls(edges, weight, coef, self_coef, float(lam), float(delta_max), bool(normalize))


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    return a - a.min(axis=-1, keepdims=True)


def marginal_update_nonsequential(cost: np.ndarray, messages: np.ndarray, model: BPModel) -> np.ndarray:
    """One Jacobi update of every marginal from the previous messages."""
    if cost.shape != messages.shape or cost.shape[:2] != model.edges.shape:
        raise DataError("cost, messages and guide shapes disagree")
    total = tree_sum(messages, model.edges)
    marg = cost + model.coef[:, :, None] * total - model.self_coef[:, :, None] * messages
    return _normalize_rows(marg) if model.normalize else marg


@numba.njit(cache=True)
def _sweep(cost, msg, marg, hz, vt, coef, selfc, lam, dmax, norm):
    h, w, n = cost.shape
    # rows below with old messages: down[y] = row[y] + vt[y] * down[y + 1]
    row = np.empty((w, n))
    left = np.empty((w, n))
    right = np.empty((w, n))
    down = np.zeros((h + 1, w, n))
    for y in range(h - 1, -1, -1):
        for k in range(n):
            left[0, k] = msg[y, 0, k]
        for x in range(1, w):
            for k in range(n):
                left[x, k] = msg[y, x, k] + hz[y, x - 1] * left[x - 1, k]
        for k in range(n):
            right[w - 1, k] = msg[y, w - 1, k]
        for x in range(w - 2, -1, -1):
            for k in range(n):
                right[x, k] = msg[y, x, k] + hz[y, x] * right[x + 1, k]
        for x in range(w):
            for k in range(n):
                r = left[x, k] + right[x, k] - msg[y, x, k]
                if y < h - 1:
                    down[y, x, k] = r + vt[y, x] * down[y + 1, x, k]
                else:
                    down[y, x, k] = r
    up = np.zeros((w, n))
    total = np.empty(n)
    cb = np.empty(n)
    for y in range(h):
        # old messages of this row, accumulated from the right
        for k in range(n):
            right[w - 1, k] = msg[y, w - 1, k]
        for x in range(w - 2, -1, -1):
            for k in range(n):
                right[x, k] = msg[y, x, k] + hz[y, x] * right[x + 1, k]
        for x in range(w):
            for k in range(n):
                t = msg[y, x, k]
                if y > 0:
                    t += vt[y - 1, x] * up[x, k]
                if x > 0:
                    t += hz[y, x - 1] * left[x - 1, k]
                if x < w - 1:
                    t += hz[y, x] * right[x + 1, k]
                if y < h - 1:
                    t += vt[y, x] * down[y + 1, x, k]
                total[k] = t
            lo = np.inf
            for k in range(n):
                cb[k] = cost[y, x, k] + coef[y, x] * total[k] - selfc[y, x] * msg[y, x, k]
                if cb[k] < lo:
                    lo = cb[k]
            for k in range(n):
                marg[y, x, k] = cb[k] - lo if norm else cb[k]
                cb[k] -= lo
            _dt_inplace(cb, msg[y, x], lam, dmax)
            for k in range(n):
                if x > 0:
                    left[x, k] = msg[y, x, k] + hz[y, x - 1] * left[x - 1, k]
                else:
                    left[x, k] = msg[y, x, k]
        # fresh row is complete: fold it into the upward accumulation
        for k in range(n):
            right[w - 1, k] = msg[y, w - 1, k]
        for x in range(w - 2, -1, -1):
            for k in range(n):
                right[x, k] = msg[y, x, k] + hz[y, x] * right[x + 1, k]
        for x in range(w):
            for k in range(n):
                r = left[x, k] + right[x, k] - msg[y, x, k]
                if y > 0:
                    up[x, k] = r + vt[y - 1, x] * up[x, k]
                else:
                    up[x, k] = r


def _flip(a: np.ndarray, flip_y: bool, flip_x: bool) -> np.ndarray:
    if flip_y:
        a = a[::-1]
    if flip_x:
        a = a[:, ::-1]
    return np.ascontiguousarray(a)


def sequential_pass(cost: np.ndarray, messages: np.ndarray, model: BPModel, sweep: int = 0,
                    marginals: np.ndarray | None = None) -> np.ndarray:
    """One sweep in direction ``SWEEPS[sweep]``; updates ``messages`` in place.

    Returns the marginal volume, where every pixel holds the marginal computed
    when the sweep visited it.
    """
    if cost.shape != messages.shape or cost.shape[:2] != model.edges.shape:
        raise DataError("cost, messages and guide shapes disagree")
    fy, fx = SWEEPS[sweep]
    edges = model.edges.flipped(fy, fx)
    c = _flip(cost, fy, fx)
    m = _flip(messages, fy, fx)
    mg = np.empty_like(c)
    _sweep(c, m, mg, edges.horizontal, edges.vertical, _flip(model.coef, fy, fx),
           _flip(model.self_coef, fy, fx), model.lam, model.delta_max, model.normalize)
    messages[...] = _flip(m, fy, fx)
    out = _flip(mg, fy, fx)
    if marginals is not None:
        marginals[...] = out
        return marginals
    return out


def marginal_update_sequential(cost: np.ndarray, messages: np.ndarray, model: BPModel) -> np.ndarray:
    """One full sequential iteration (all four sweeps); updates ``messages`` in place."""
    marg = None
    for k in range(len(SWEEPS)):
        marg = sequential_pass(cost, messages, model, k, marg)
    return marg


def wta_labels(marginals: np.ndarray) -> np.ndarray:
    """Per-pixel argmin label index; ties go to the lowest index."""
    return np.argmin(marginals, axis=2)


def energy(cost: np.ndarray, labels: np.ndarray, model: BPModel) -> float:
    """Unary plus normalised pairwise energy of an integer labelling."""
    labels = np.asarray(labels)
    h, w, n = cost.shape
    if labels.shape != (h, w) or not np.issubdtype(labels.dtype, np.integer):
        raise DataError("labels must be an integer map matching the cost volume")
    if labels.min() < 0 or labels.max() >= n:
        raise DataError("labels out of range")
    unary = np.take_along_axis(cost, labels[:, :, None], axis=2).sum()
    present = np.unique(labels)
    indicator = (labels[:, :, None] == present[None, None, :]).astype(np.float64)
    counts = tree_sum(indicator, model.edges)  # n_q(j) for present labels j
    phi = binary_potential(present[None, :], np.arange(n)[:, None], model.lam, model.delta_max)
    pair_all = counts @ phi.T  # (h, w, n): sum_j n_q(j) phi(j, s)
    pair = np.take_along_axis(pair_all, labels[:, :, None], axis=2)[:, :, 0]
    return float(unary + np.sum(pair / model.weight))


@dataclass
class BPResult:
    marginals: np.ndarray
    messages: np.ndarray
    energy_trace: list = field(default_factory=list)


def run_bp(cost, guide: GuideImage | None, params: PipelineParams, schedule: str | None = None,
           iterations: int | None = None, model: BPModel | None = None) -> BPResult:
    """Iterate marginal/message updates from zero messages.

    ``energy_trace[t]`` is the energy of the WTA labelling after iteration t.
    """
    values = cost.values if isinstance(cost, CostVolume) else np.asarray(cost, dtype=np.float64)
    schedule = schedule or params.schedule
    iterations = params.iterations if iterations is None else iterations
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    if model is None:
        model = BPModel.build(guide, params)
    messages = np.zeros_like(values)
    trace = []
    marg = values
    for _ in range(iterations):
        if schedule == "sequential":
            marg = marginal_update_sequential(values, messages, model)
        elif schedule == "nonsequential":
            marg = marginal_update_nonsequential(values, messages, model)
            messages = messages_from_marginals(_normalize_rows(marg), model.lam, model.delta_max)
        else:
            raise ParameterError(f"unknown schedule {schedule!r}")
        trace.append(energy(values, wta_labels(marg), model))
    return BPResult(marginals=marg, messages=messages, energy_trace=trace)


def write_energy_trace(trace, path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,energy\n")
        for t, e in enumerate(trace, 1):
            fh.write(f"{t},{e!r}\n")
