"""Kriging-based air-quality mapping, hotspot classification and plume dispersion."""

from .datamodel import ReadingFrame, Station, ingest_readings, preprocess, inverse_preprocess
from .exceptions import (
    DataError,
    InsufficientDataError,
    ParseError,
    SingularSystemError,
    UnitError,
)
from .hotspot import HotspotRules, classify_frame, classify_month, count_hotspots
from .kriging import KrigingTask, OrdinaryKriging, interpolate_series, interpolate_timestep, solve
from .stationarity import adf_test
from .variogram import VariogramModel, empirical_variogram, evaluate, fit

__version__ = "0.1.0"

__all__ = [
    "DataError", "HotspotRules", "InsufficientDataError", "KrigingTask", "OrdinaryKriging",
    "ParseError", "ReadingFrame", "SingularSystemError", "Station", "UnitError",
    "VariogramModel", "adf_test", "classify_frame", "classify_month", "count_hotspots",
    "empirical_variogram", "evaluate", "fit", "ingest_readings", "interpolate_series",
    "interpolate_timestep", "inverse_preprocess", "preprocess", "solve",
]
