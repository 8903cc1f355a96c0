"""Evidence-preserving fusion of banded audio-encoder features into a
speech-encoder token stream, plus the diagnostics that check it."""

from .aggregator import AggregatorParams, aggregate
from .alignment import time_aware_interpolate
from .features import BandedFeatureMap, TemporalSequence, TimelineSpec
from .fusion import FusionParams, inject_and_add
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "AggregatorParams",
    "BandedFeatureMap",
    "FusionParams",
    "PipelineConfig",
    "TemporalSequence",
    "TimelineSpec",
    "aggregate",
    "inject_and_add",
    "run_pipeline",
    "time_aware_interpolate",
]
__version__ = "0.1.0"
