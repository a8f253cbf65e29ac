"""Confidence-set inference for moment-inequality models whose moments are
approximated by simulation."""

from . import core, harness, inference, models, selfcheck, smoothing, streams
from .core import Dataset, MomentModel, MomentStats, SimPanel
from .inference import (
    ConfidenceOutcome,
    CriticalValueSpec,
    Fixed,
    GmsBootstrap,
    LevelSet,
    SmoothedBootstrap,
)
from .smoothing import IndexKind, IndexSpec
from .streams import Stream

__version__ = "0.1.0"

__all__ = [
    "ConfidenceOutcome",
    "CriticalValueSpec",
    "Dataset",
    "Fixed",
    "GmsBootstrap",
    "IndexKind",
    "IndexSpec",
    "LevelSet",
    "MomentModel",
    "MomentStats",
    "SimPanel",
    "SmoothedBootstrap",
    "Stream",
    "__version__",
    "core",
    "harness",
    "inference",
    "models",
    "selfcheck",
    "smoothing",
    "streams",
]
