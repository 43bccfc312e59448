"""Sequential sampling from a birth process with immigration: exact laws and Monte Carlo checks."""

from .distributions import LogSeriesLaw, ModelParams
from .interval_analytics import Interval, SampleSizes, TimeGrid

__all__ = ["ModelParams", "LogSeriesLaw", "Interval", "TimeGrid", "SampleSizes"]

__version__ = "0.1.0"
