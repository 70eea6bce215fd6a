"""Operator learning with kernel-coupled attention over function spaces."""

from .errors import ConfigError, DataError, LocaError, MetricUndefined, NumericError, ShapeError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "LocaError", "MetricUndefined", "NumericError", "ShapeError",
           "__version__"]
