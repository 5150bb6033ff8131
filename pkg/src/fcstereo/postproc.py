"""Disparity refinement: geodesic upscaling, weighted median, plane fitting,
sub-pixel interpolation and small-region suppression."""

from __future__ import annotations

import numba
import numpy as np

from .core import CostVolume, DataError, DisparityMap, GuideImage, NumericError, OcclusionMap, ParameterError
from .geodesic import affinity_from_sigmas, gd_filter


def _vals(s) -> np.ndarray:
    return s.values if isinstance(s, DisparityMap) else np.asarray(s, dtype=np.float64)


def seed_fields(s_dwsc: np.ndarray, shape: tuple[int, int], M: int):
    """Sparse seed values and mask on the full grid, seeds at ``(M xi, M zeta)``."""
    h, w = shape
    s_in = np.zeros((h, w))
    msk = np.zeros((h, w))
    sd = np.asarray(s_dwsc, dtype=np.float64)
    ys = np.arange(sd.shape[0]) * M
    xs = np.arange(sd.shape[1]) * M
    if ys[-1] >= h or xs[-1] >= w:
        raise DataError("downscaled map does not fit the full-resolution grid")
    s_in[np.ix_(ys, xs)] = sd
    msk[np.ix_(ys, xs)] = 1.0
    return s_in, msk


def upscale(s_dwsc, guide: GuideImage, M: int, sigma_ru: float, sigma_su: float) -> DisparityMap:
    """Joint geodesic filtering of the seed field divided by the filtered seed mask."""
    if sigma_ru <= 0 or sigma_su <= 0:
        raise ParameterError("upscale sigmas must be positive")
    sd = _vals(s_dwsc)
    if M == 1:
        if sd.shape != guide.shape:
            raise DataError("M = 1 requires a map at guide resolution")
        return DisparityMap(sd.copy())
    s_in, msk = seed_fields(sd, guide.shape, M)
    params = affinity_from_sigmas(sigma_ru, sigma_su)
    num, _ = gd_filter(s_in, guide, params)
    den, _ = gd_filter(msk, guide, params)
    if np.any(~(den > np.finfo(np.float64).tiny)):
        raise NumericError("upscale denominator underflow: a pixel is unreachable from every seed")
    return DisparityMap(num / den)


@numba.njit(cache=True)
def _weighted_median(s, img, occ, rho_nocc, rho_occ, sigma_m, times_value):
    h, w = s.shape
    out = np.empty_like(s)
    rmax = max(rho_nocc, rho_occ)
    vals = np.empty((2 * rmax + 1) ** 2)
    wts = np.empty((2 * rmax + 1) ** 2)
    inv_m = 1.0 / (2.0 * sigma_m * sigma_m)
    for y in range(h):
        for x in range(w):
            rho = rho_occ if occ[y, x] else rho_nocc
            inv_s = 1.0 / (2.0 * rho * rho)
            n = 0
            for yy in range(max(0, y - rho), min(h, y + rho + 1)):
                for xx in range(max(0, x - rho), min(w, x + rho + 1)):
                    dc = 0.0
                    for c in range(3):
                        d = img[yy, xx, c] - img[y, x, c]
                        dc += d * d
                    dist2 = (yy - y) ** 2 + (xx - x) ** 2
                    wt = np.exp(-dist2 * inv_s - dc * inv_m)
                    if times_value:
                        wt *= s[yy, xx]
                    vals[n] = s[yy, xx]
                    wts[n] = wt
                    n += 1
            order = np.argsort(vals[:n], kind="mergesort")
            total = 0.0
            for i in range(n):
                total += wts[i]
            if total <= 0.0:
                out[y, x] = s[y, x]
                continue
            acc = 0.0
            half = 0.5 * total
            res = vals[order[n - 1]]
            for i in range(n):
                acc += wts[order[i]]
                if acc >= half:
                    res = vals[order[i]]
                    break
            out[y, x] = res
    return out


def weighted_median(s, guide: GuideImage, occ: OcclusionMap | np.ndarray | None = None, rho_nocc: int = 3,
                    rho_occ: int = 8, sigma_m: float = 10.0, variant: str = "weight") -> DisparityMap:
    """Weighted histogram median over a ``(2 rho + 1)^2`` window, ``rho`` by occlusion state.

    ``variant="weight_times_value"`` multiplies each histogram vote by the
    voting disparity.
    """
    sv = _vals(s)
    if sv.shape != guide.shape:
        raise DataError("disparity map and guide differ in shape")
    if occ is None:
        o = np.zeros(sv.shape, dtype=bool)
    else:
        o = occ.occluded if isinstance(occ, OcclusionMap) else np.asarray(occ, dtype=bool)
    if variant not in ("weight", "weight_times_value"):
        raise ParameterError(f"unknown median variant {variant!r}")
    out = _weighted_median(np.ascontiguousarray(sv), guide.pixels, o, int(rho_nocc), int(rho_occ),
                           float(sigma_m), variant == "weight_times_value")
    return DisparityMap(out)


@numba.njit(cache=True)
def _plane_fit(s, gx, gy, r, sigma_pi, sigma_g):
    h, w = s.shape
    out = np.empty_like(s)
    ip = 1.0 / (2.0 * sigma_pi * sigma_pi)
    ig = 1.0 / (2.0 * sigma_g * sigma_g)
    for y in range(h):
        for x in range(w):
            num = 0.0
            den = 0.0
            for yy in range(max(0, y - r), min(h, y + r + 1)):
                for xx in range(max(0, x - r), min(w, x + r + 1)):
                    pred = s[yy, xx] + gx[yy, xx] * (x - xx) + gy[yy, xx] * (y - yy)
                    dgx = gx[yy, xx] - gx[y, x]
                    dgy = gy[yy, xx] - gy[y, x]
                    dp = pred - s[y, x]
                    wt = np.exp(-dp * dp * ip - (dgx * dgx + dgy * dgy) * ig)
                    num += wt * pred
                    den += wt
            out[y, x] = num / den
    return out


def plane_fit(s, sigma_pi: float = 5.0, sigma_g: float = 0.2, window: int = 15) -> DisparityMap:
    """Average of local plane predictions, weighted by prediction and gradient agreement."""
    sv = np.ascontiguousarray(_vals(s))
    if window < 1 or window % 2 == 0:
        raise ParameterError("plane window must be a positive odd size")
    h, w = sv.shape
    gy = np.gradient(sv, axis=0) if h > 1 else np.zeros_like(sv)
    gx = np.gradient(sv, axis=1) if w > 1 else np.zeros_like(sv)
    return DisparityMap(_plane_fit(sv, np.ascontiguousarray(gx), np.ascontiguousarray(gy), window // 2,
                                   float(sigma_pi), float(sigma_g)))


def subpixel(s, cost: CostVolume) -> DisparityMap:
    """Quadratic-vertex refinement around the (rounded) disparity.

    Labels on the volume border, or with a non-convex neighbourhood, pass
    through unchanged.  The offset is clamped to half a label.
    """
    sv = _vals(s)
    v = cost.values
    if sv.shape != v.shape[:2]:
        raise DataError("disparity map and cost volume differ in shape")
    idx = np.rint((sv - cost.label_origin) / cost.label_step).astype(np.int64)
    n = v.shape[2]
    interior = (idx >= 1) & (idx <= n - 2)
    k = np.clip(idx, 1, max(1, n - 2))
    if n < 3:
        return DisparityMap(sv.copy())
    c0 = np.take_along_axis(v, k[:, :, None], axis=2)[:, :, 0]
    cm = np.take_along_axis(v, (k - 1)[:, :, None], axis=2)[:, :, 0]
    cp = np.take_along_axis(v, (k + 1)[:, :, None], axis=2)[:, :, 0]
    den = cp + cm - 2.0 * c0
    ok = interior & (den > 0)
    offset = np.zeros_like(sv)
    offset[ok] = -(cp[ok] - cm[ok]) / (2.0 * den[ok])
    offset = np.clip(offset, -0.5, 0.5)
    base = cost.label_origin + idx * cost.label_step
    out = np.where(ok, base + offset * cost.label_step, sv)
    return DisparityMap(out)


@numba.njit(cache=True)
def _components(s, tol):
    h, w = s.shape
    lab = -np.ones((h, w), dtype=np.int64)
    stack = np.empty(h * w, dtype=np.int64)
    n = 0
    for y0 in range(h):
        for x0 in range(w):
            if lab[y0, x0] >= 0:
                continue
            lab[y0, x0] = n
            top = 0
            stack[top] = y0 * w + x0
            top += 1
            while top > 0:
                top -= 1
                p = stack[top]
                y = p // w
                x = p % w
                for k in range(4):
                    yy = y + (1 if k == 0 else -1 if k == 1 else 0)
                    xx = x + (1 if k == 2 else -1 if k == 3 else 0)
                    if yy < 0 or yy >= h or xx < 0 or xx >= w or lab[yy, xx] >= 0:
                        continue
                    if abs(s[yy, xx] - s[y, x]) <= tol:
                        lab[yy, xx] = n
                        stack[top] = yy * w + xx
                        top += 1
            n += 1
    return lab, n


def label_regions(s, merge_tol: float = 1.0):
    """4-connected components joining neighbours that differ by at most ``merge_tol``."""
    return _components(np.ascontiguousarray(_vals(s)), float(merge_tol))


def suppress_small_regions(s, min_area: int, merge_tol: float = 1.0) -> DisparityMap:
    """Refill components smaller than ``min_area`` from the large neighbour they touch most.

    The fill value is the median of that neighbour's pixels along the shared
    boundary.  Small regions with no large neighbour are left unchanged.
    """
    sv = _vals(s)
    out = sv.copy()
    lab, n = label_regions(sv, merge_tol)
    area = np.bincount(lab.ravel(), minlength=n)
    small = area < min_area
    if not small.any() or small.all():
        return DisparityMap(out)
    # every 4-neighbour pair across a component boundary, in both directions
    pairs = []
    for a, b in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        pairs.append((a.ravel(), b.ravel()))
    nbr_vals = []
    for (a, b), (va, vb) in zip(pairs, ((sv[:, :-1], sv[:, 1:]), (sv[:-1, :], sv[1:, :]))):
        va, vb = va.ravel(), vb.ravel()
        diff = a != b
        nbr_vals.append((a[diff], b[diff], vb[diff]))
        nbr_vals.append((b[diff], a[diff], va[diff]))
    region = np.concatenate([t[0] for t in nbr_vals])
    other = np.concatenate([t[1] for t in nbr_vals])
    value = np.concatenate([t[2] for t in nbr_vals])
    keep = small[region] & ~small[other]
    region, other, value = region[keep], other[keep], value[keep]
    for r in np.unique(region):
        sel = region == r
        cand = other[sel]
        ids, counts = np.unique(cand, return_counts=True)
        best = ids[np.argmax(counts)]
        fill = np.median(value[sel][cand == best])
        out[lab == r] = fill
    return DisparityMap(out)
