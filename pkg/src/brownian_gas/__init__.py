"""Simulation and verification toolkit for the boundary-driven Brownian gas on (0, 1)."""

__version__ = "0.1.0"

from .analytic import ReservoirParams, SeriesControl, StickyParams  # noqa: E402
from .configuration import Configuration  # noqa: E402
from .paths import RngStream, TimeGrid  # noqa: E402

__all__ = ["Configuration", "ReservoirParams", "RngStream", "SeriesControl", "StickyParams",
           "TimeGrid", "__version__"]
