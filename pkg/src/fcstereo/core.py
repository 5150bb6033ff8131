"""Shared value types, parameters and grid conventions.

Arrays are indexed ``[y, x]`` (row-major, origin top-left, x to the right,
y downward).  A disparity ``s`` maps the left pixel ``(x, y)`` to the right
pixel ``(x - s, y)``.  Cost and marginal volumes are ``(H, W, L)`` arrays with
the label axis last.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np


class ParameterError(ValueError):
    pass


class DataError(ValueError):
    pass


class FormatError(DataError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class GuideImage:
    """Rectified colour image, ``(H, W, 3)`` float64 values in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = np.repeat(px[:, :, None], 3, axis=2)
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"guide image must be HxWx3, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DataError("guide image must have at least one pixel")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 255.0:
            raise DataError("guide image values must be finite and within [0, 255]")
        px = np.ascontiguousarray(px)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]

    def gray(self) -> np.ndarray:
        return self.pixels.mean(axis=2)


@dataclass(frozen=True)
class CostVolume:
    """Unary potentials (or marginals) over ``(H, W, L)``.

    ``label_origin`` and ``label_step`` relate label index ``k`` to the
    disparity ``label_origin + k * label_step``.  After label-domain pooling,
    ``argmin_disparity`` records the original disparity that produced each
    pooled cell.
    """

    values: np.ndarray
    label_origin: int = 0
    label_step: int = 1
    argmin_disparity: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise DataError(f"cost volume must be HxWxL, got shape {v.shape}")
        if v.shape[2] < 1:
            raise DataError("cost volume needs at least one label")
        if not np.all(np.isfinite(v)):
            raise DataError("cost volume contains non-finite values")
        if self.label_step < 1:
            raise DataError("label_step must be >= 1")
        object.__setattr__(self, "values", v)
        if self.argmin_disparity is not None:
            a = np.asarray(self.argmin_disparity, dtype=np.int64)
            if a.shape != v.shape:
                raise DataError("argmin_disparity shape must match the cost values")
            k = np.arange(v.shape[2])
            lo = self.label_origin + k * self.label_step
            if np.any(a < lo) or np.any(a > lo + self.label_step - 1):
                raise DataError("argmin_disparity outside the label interval it covers")
            object.__setattr__(self, "argmin_disparity", a)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def labels(self) -> int:
        return self.values.shape[2]

    def with_values(self, values: np.ndarray) -> "CostVolume":
        return dataclasses.replace(self, values=values)

    def label_to_disparity(self, labels: np.ndarray) -> np.ndarray:
        """Map an integer label map ``(H, W)`` back to disparities."""
        labels = np.asarray(labels, dtype=np.int64)
        if self.argmin_disparity is not None:
            return np.take_along_axis(self.argmin_disparity, labels[:, :, None], axis=2)[:, :, 0]
        return self.label_origin + labels * self.label_step


@dataclass(frozen=True)
class DisparityMap:
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DataError(f"disparity map must be 2-D, got shape {v.shape}")
        valid = np.isfinite(v) if self.valid is None else np.asarray(self.valid, dtype=bool)
        if valid.shape != v.shape:
            raise DataError("validity mask shape does not match the disparity map")
        if not np.all(np.isfinite(v[valid])):
            raise DataError("valid disparities must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class OcclusionMap:
    """``occluded[y, x]`` is True for occ, False for nocc."""

    occluded: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.occluded, dtype=bool)
        if o.ndim != 2:
            raise DataError("occlusion map must be 2-D")
        object.__setattr__(self, "occluded", o)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occluded.shape

    def to_pgm_bytes(self) -> bytes:
        h, w = self.occluded.shape
        body = np.where(self.occluded, 0, 255).astype(np.uint8).tobytes()
        return f"P5\n{w} {h}\n255\n".encode("ascii") + body


def derive_scale(width: int, height: int, labels: int) -> int:
    """Downscale factor M from the full-resolution size and disparity range."""
    if width < 1 or height < 1 or labels < 1:
        raise ParameterError("dimensions and label count must be positive")
    if labels > 300:
        return 5
    if width < 1000 and height < 500:
        return 3
    return 4


AUTO = None
# zero smoothness is a legitimate degenerate setting (plain per-pixel argmin)
_NONNEGATIVE = ("lambda_", "delta_max")


@dataclass
class PipelineParams:
    """All tunable knobs of the pipeline.

    Fields left at ``None`` are derived from the input at run time
    (see :meth:`resolve`).
    """

    sigma_r: float = 30.0
    sigma_s: float = 8.0
    lambda_: float = 0.12
    delta_max: float = 8.0
    scale_M: Optional[int] = AUTO
    iterations: int = 3
    sigma_ru: Optional[float] = AUTO
    sigma_su: Optional[float] = AUTO
    median_rho_nocc: int = 3
    median_rho_occ: int = 8
    median_sigma_m: float = 10.0
    plane_sigma_pi: float = 5.0
    plane_sigma_g: float = 0.2
    plane_window: int = 15
    min_region_area: Optional[int] = AUTO
    merge_tol: float = 1.0
    # artifact choices, not taken from the method description
    schedule: str = "sequential"
    self_term: str = "exact"
    normalize_marginals: bool = False
    downscale_radius: Optional[float] = AUTO
    truncate_cost: bool = False
    census_width: int = 9
    census_height: int = 7
    census_alpha: float = 0.7
    ad_tau: float = 30.0
    border_fill: str = "rowmax"
    median_variant: str = "weight"
    shear: str = "intersect"
    labels: Optional[int] = AUTO  # disparity hypotheses 0..labels-1 for the built-in cost

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or isinstance(v, (str, bool)):
                continue
            if f.name in _NONNEGATIVE:
                if not np.isfinite(v) or v < 0:
                    raise ParameterError(f"{config_key(f.name)} must be non-negative, got {v}")
            elif not np.isfinite(v) or v <= 0:
                raise ParameterError(f"{config_key(f.name)} must be strictly positive, got {v}")
        if self.scale_M is not None and int(self.scale_M) != self.scale_M:
            raise ParameterError("scale_M must be an integer")
        if self.schedule not in ("sequential", "nonsequential"):
            raise ParameterError(f"unknown schedule {self.schedule!r}")
        if self.self_term not in ("literal", "exact"):
            raise ParameterError(f"unknown self_term {self.self_term!r}")
        if self.median_variant not in ("weight", "weight_times_value"):
            raise ParameterError(f"unknown median_variant {self.median_variant!r}")
        if self.border_fill not in ("rowmax", "clamp"):
            raise ParameterError(f"unknown border_fill {self.border_fill!r}")
        if self.shear not in ("intersect", "literal"):
            raise ParameterError(f"unknown shear {self.shear!r}")

    def resolve(self, width: int, height: int, labels: int) -> "PipelineParams":
        """Fill every ``None`` field for a full-resolution input."""
        M = self.scale_M if self.scale_M is not None else derive_scale(width, height, labels)
        out = dataclasses.replace(self, scale_M=int(M))
        if out.sigma_ru is None:
            out.sigma_ru = 0.85 * M
        if out.sigma_su is None:
            out.sigma_su = 0.85 * M
        if out.downscale_radius is None:
            out.downscale_radius = float(M)
        if out.labels is None:
            out.labels = int(labels)
        if out.min_region_area is None:
            out.min_region_area = max(1, int(round(0.001 * width * height)))
        return out


def config_key(name: str) -> str:
    return name.rstrip("_")


def _field_map() -> dict:
    return {config_key(f.name): f for f in fields(PipelineParams)}


def parse_value(f: dataclasses.Field, text: str):
    text = text.strip()
    if text.lower() in ("auto", "none"):
        return None
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if "bool" in kind:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ParameterError(f"{config_key(f.name)}: expected a boolean, got {text!r}")
    if "int" in kind:
        try:
            return int(text)
        except ValueError:
            raise ParameterError(f"{config_key(f.name)}: expected an integer, got {text!r}") from None
    if "float" in kind:
        try:
            return float(text)
        except ValueError:
            raise ParameterError(f"{config_key(f.name)}: expected a number, got {text!r}") from None
    return text


def parse_config(text: str, base: Optional[PipelineParams] = None) -> PipelineParams:
    """Parse ``key = value`` lines (``#`` starts a comment) over ``base``."""
    fmap = _field_map()
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fmap:
            raise ParameterError(f"line {lineno}: unknown key {key!r}")
        updates[fmap[key].name] = parse_value(fmap[key], value)
    base = base if base is not None else PipelineParams()
    return dataclasses.replace(base, **updates)


def format_config(params: PipelineParams) -> str:
    lines = []
    for f in fields(params):
        v = getattr(params, f.name)
        if v is None:
            text = "auto"
        elif isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{config_key(f.name)} = {text}")
    return "\n".join(lines) + "\n"


def load_config(path, base: Optional[PipelineParams] = None) -> PipelineParams:
    return parse_config(Path(path).read_text(), base)


def save_config(params: PipelineParams, path) -> None:
    Path(path).write_text(format_config(params))
