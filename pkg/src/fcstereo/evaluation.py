"""Ground-truth IO (PFM, masks) and disparity error metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import DataError, DisparityMap, FormatError, OcclusionMap

BAD_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
QUANTILES = (50, 90, 95, 99)
METRIC_NAMES = ("bad0.5", "bad1", "bad2", "bad4", "avrg", "rms", "A50", "A90", "A95", "A99")

# all-mask averages reported for the one-view method with a learned matching cost;
# kept for side-by-side tables, not reproducible with the built-in cost
REFERENCE_OVOD_ALL = {"avrg": 5.19, "rms": 22.3, "A95": 27.1}


class EvaluationError(DataError):
    pass


def _read_line(buf: bytes, pos: int) -> tuple[str, int]:
    end = buf.find(b"\n", pos)
    if end < 0:
        raise FormatError("PFM header is truncated")
    try:
        return buf[pos:end].decode("ascii").strip(), end + 1
    except UnicodeDecodeError:
        raise FormatError("PFM header is not ASCII") from None


def parse_pfm(data: bytes) -> tuple[np.ndarray, float]:
    """Decode PFM bytes into a top-to-bottom float32 array and the scale value."""
    magic, pos = _read_line(data, 0)
    if magic != "Pf":
        raise FormatError(f"expected a greyscale 'Pf' header, got {magic!r}")
    dims, pos = _read_line(data, pos)
    try:
        w, h = (int(t) for t in dims.split())
        scale_line, pos = _read_line(data, pos)
        scale = float(scale_line)
    except ValueError:
        raise FormatError("malformed PFM dimensions or scale") from None
    if w < 1 or h < 1 or scale == 0 or not math.isfinite(scale):
        raise FormatError(f"invalid PFM header: {w}x{h}, scale {scale}")
    if len(data) - pos != 4 * w * h:
        raise FormatError(f"PFM body has {len(data) - pos} bytes, header needs {4 * w * h}")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype, offset=pos).reshape(h, w)[::-1]
    if np.any(np.isnan(arr)):
        raise FormatError("PFM contains NaN values")
    return arr.astype(np.float32), scale


def read_pfm(path) -> DisparityMap:
    """Read a PFM disparity map; infinite entries become invalid pixels."""
    try:
        arr, _ = parse_pfm(Path(path).read_bytes())
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from None
    return DisparityMap(arr.astype(np.float64), valid=np.isfinite(arr))


def encode_pfm(values: np.ndarray, scale: float = -1.0) -> bytes:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise DataError("PFM holds a 2-D field")
    if np.any(np.isnan(v)):
        raise DataError("cannot store NaN in PFM; mark invalid pixels with inf")
    if scale == 0:
        raise DataError("PFM scale must be non-zero")
    h, w = v.shape
    dtype = "<f4" if scale < 0 else ">f4"
    header = f"Pf\n{w} {h}\n{scale!r}\n".encode("ascii")
    return header + np.ascontiguousarray(v[::-1], dtype=dtype).tobytes()


def write_pfm(disp, path, scale: float = -1.0) -> None:
    """Write a map as PFM; invalid pixels are stored as +inf."""
    if isinstance(disp, DisparityMap):
        v = np.where(disp.valid, disp.values, np.inf)
    else:
        v = np.asarray(disp, dtype=np.float64)
    Path(path).write_bytes(encode_pfm(v, scale))


def read_mask(path) -> np.ndarray:
    """Non-occlusion mask image: True where the pixel is visible in both views (value 255)."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return arr == 255


def occlusion_from_gt(gt: DisparityMap) -> OcclusionMap:
    """Pixels hidden in the right view, found by z-buffering the left GT into it.

    A left pixel is occluded when its right-view column falls outside the
    image or is claimed by a pixel with a larger disparity.
    """
    v = gt.values
    h, w = v.shape
    occ = ~gt.valid.copy()
    for y in range(h):
        ok = gt.valid[y]
        xs = np.nonzero(ok)[0]
        cols = np.rint(xs - v[y, xs]).astype(np.int64)
        inside = (cols >= 0) & (cols < w)
        zbuf = np.full(w, -np.inf)
        np.maximum.at(zbuf, cols[inside], v[y, xs[inside]])
        hidden = np.ones(xs.shape, dtype=bool)
        hidden[inside] = v[y, xs[inside]] < zbuf[cols[inside]] - 0.5
        occ[y, xs] = hidden
    return OcclusionMap(occ)


@dataclass(frozen=True)
class MaskMetrics:
    bad0_5: float
    bad1: float
    bad2: float
    bad4: float
    avrg: float
    rms: float
    A50: float
    A90: float
    A95: float
    A99: float
    count: int

    def as_row(self) -> dict:
        d = asdict(self)
        d["bad0.5"] = d.pop("bad0_5")
        return d


@dataclass(frozen=True)
class EvalReport:
    all: MaskMetrics
    nonocc: MaskMetrics | None

    def rows(self, image: str = "result") -> list[dict]:
        out = [{"image": image, "mask": "all", **self.all.as_row()}]
        if self.nonocc is not None:
            out.append({"image": image, "mask": "nonocc", **self.nonocc.as_row()})
        return out


def error_quantile(errors: np.ndarray, q: float, mode: str = "percentile") -> float:
    """Nearest-rank percentile, or the mean of the ``q`` % smallest errors."""
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise EvaluationError("no pixels to evaluate")
    k = max(1, int(math.ceil(q / 100.0 * e.size)))
    if mode == "percentile":
        return float(e[k - 1])
    if mode == "trimmed":
        return float(e[:k].mean())
    raise ValueError(f"unknown quantile mode {mode!r}")


def mask_metrics(errors: np.ndarray, quantile_mode: str = "percentile") -> MaskMetrics:
    e = np.asarray(errors, dtype=np.float64).ravel()
    if e.size == 0:
        raise EvaluationError("evaluation mask is empty")
    bad = [100.0 * np.count_nonzero(e > t) / e.size for t in BAD_THRESHOLDS]
    qs = [error_quantile(e, q, quantile_mode) for q in QUANTILES]
    top = float(e.max())
    rms = top * float(np.sqrt(np.mean((e / top) ** 2))) if top > 0 else 0.0  # scaled against underflow
    return MaskMetrics(*bad, float(e.mean()), rms, *qs, count=int(e.size))


def compute_metrics(result, gt, occ: OcclusionMap | np.ndarray | None = None,
                    quantile_mode: str = "percentile") -> EvalReport:
    """Error statistics over valid GT pixels (``all``) and the visible subset (``nonocc``).

    ``occ`` marks occluded pixels; when omitted it is derived from ``gt``.
    """
    r = result if isinstance(result, DisparityMap) else DisparityMap(result)
    g = gt if isinstance(gt, DisparityMap) else DisparityMap(gt)
    if r.shape != g.shape:
        raise DataError(f"result {r.shape} and ground truth {g.shape} differ in shape")
    if occ is None:
        occ = occlusion_from_gt(g)
    o = occ.occluded if isinstance(occ, OcclusionMap) else np.asarray(occ, dtype=bool)
    if o.shape != g.shape:
        raise DataError("occlusion mask shape does not match the ground truth")
    mask_all = g.valid
    if np.any(mask_all & ~r.valid):
        raise EvaluationError("result has invalid pixels where the ground truth is valid")
    err = np.abs(r.values - g.values)
    all_m = mask_metrics(err[mask_all], quantile_mode)
    nonocc = mask_all & ~o
    non_m = mask_metrics(err[nonocc], quantile_mode) if nonocc.any() else None
    return EvalReport(all_m, non_m)


def write_report(rows: list[dict], path) -> None:
    fields = ["image", "mask", *METRIC_NAMES, "count"]
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        wr.writeheader()
        for row in rows:
            wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
