"""Stereo matching by belief propagation on a fully connected CRF with
geodesic affinities, plus one-view occlusion detection."""

from .core import (CostVolume, DataError, DisparityMap, FormatError, GuideImage, NumericError, OcclusionMap,
                   ParameterError, PipelineParams)
from .pipeline import MatchResult, match

__version__ = "0.1.0"
