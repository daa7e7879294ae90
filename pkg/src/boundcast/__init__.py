"""Adaptive probabilistic forecasting of double-bounded time series."""

from .glogit import GlogitMap, InflatedNormal, PredictiveCdf, glogit_forward, glogit_inverse

__version__ = "0.1.0"

__all__ = ["GlogitMap", "InflatedNormal", "PredictiveCdf", "glogit_forward", "glogit_inverse", "__version__"]
