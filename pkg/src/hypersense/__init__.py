"""Wideband spectrum sensing and signal identification toolkit."""

__version__ = "0.1.0"

from .iqio import IqRecording, read_iq, write_iq
from .noisefloor import (
    DetectedComponent,
    NoiseFloorEstimate,
    NoiseFloorParams,
)

__all__ = [
    "IqRecording",
    "read_iq",
    "write_iq",
    "DetectedComponent",
    "NoiseFloorEstimate",
    "NoiseFloorParams",
    "__version__",
]
