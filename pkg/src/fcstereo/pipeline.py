"""End-to-end matching: cost, downscale, belief propagation, one-view
occlusion handling and refinement."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .core import CostVolume, DataError, DisparityMap, GuideImage, OcclusionMap, PipelineParams
from .cost import baseline_cost, downscale_cost, downscale_image, truncate_cost
from .crf import run_bp
from .ovod import OvodSolution, ovod
from .postproc import plane_fit, subpixel, suppress_small_regions, upscale, weighted_median


class StageError(DataError):
    """A data or numeric failure, tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except (DataError, ArithmeticError, OSError) as e:
        if isinstance(e, StageError):
            raise
        raise StageError(name, e) from e


@dataclass
class MatchResult:
    disparity: DisparityMap
    occlusion: OcclusionMap
    energy_trace: list
    params: PipelineParams
    solution: OvodSolution  # on the downscaled grid
    coarse: DisparityMap  # downscaled disparity after the median filter


def nearest_seed_upsample(a: np.ndarray, shape: tuple[int, int], M: int) -> np.ndarray:
    """Copy each full-resolution pixel from the closest ``(M xi, M zeta)`` seed."""
    h, w = shape
    iy = np.clip(np.rint(np.arange(h) / M).astype(np.int64), 0, a.shape[0] - 1)
    ix = np.clip(np.rint(np.arange(w) / M).astype(np.int64), 0, a.shape[1] - 1)
    return a[np.ix_(iy, ix)]


def match(left: GuideImage, right: GuideImage | None = None, cost: CostVolume | None = None,
          params: PipelineParams | None = None, postproc: bool = True) -> MatchResult:
    """Run the full pipeline on a rectified pair or on an external full-resolution cost."""
    params = params or PipelineParams()
    with stage("cost"):
        if cost is None:
            if right is None:
                raise DataError("need a right image or an external cost volume")
            n = params.labels if params.labels is not None else max(2, left.width // 4)
            cost = baseline_cost(left, right, n, params.census_width, params.census_height,
                                 params.census_alpha, params.ad_tau, params.border_fill)
        elif cost.values.shape[:2] != left.shape:
            raise DataError(f"cost volume is {cost.width}x{cost.height}, guide is {left.width}x{left.height}")
    p = params.resolve(left.width, left.height, cost.labels)
    M = p.scale_M
    full_cost = cost
    with stage("truncate"):
        if p.truncate_cost:
            cost = truncate_cost(cost)
    with stage("downscale"):
        dcost = downscale_cost(cost, M, p.downscale_radius)
        dguide = downscale_image(left, M, p.downscale_radius)
    with stage("bp"):
        bp = run_bp(dcost, dguide, p)
    with stage("ovod"):
        sol = ovod(dcost.with_values(bp.marginals), p.shear)
    occ_full = OcclusionMap(nearest_seed_upsample(sol.occlusion.occluded, left.shape, M))
    with stage("postproc"):
        coarse = sol.fused
        if postproc:
            coarse = weighted_median(coarse, dguide, sol.occlusion, p.median_rho_nocc, p.median_rho_occ,
                                     p.median_sigma_m, p.median_variant)
        disp = upscale(coarse, left, M, p.sigma_ru, p.sigma_su)
        if postproc:
            disp = plane_fit(disp, p.plane_sigma_pi, p.plane_sigma_g, p.plane_window)
            disp = subpixel(disp, full_cost)
            disp = suppress_small_regions(disp, p.min_region_area, p.merge_tol)
    return MatchResult(disp, occ_full, bp.energy_trace, p, sol, coarse)
