"""Simulation, transforms and pricing for subordinated (subdiffusive) Brownian motion."""
from .harness import RngStream, TestReport, make_stream
from .levy import LaplaceExponent, LevyTail, phi_eval
from .pricing import BumpPayoff, MarketSpec, ParisianContract, PriceEstimate

__all__ = ["RngStream", "TestReport", "make_stream", "LaplaceExponent", "LevyTail", "phi_eval",
           "BumpPayoff", "MarketSpec", "ParisianContract", "PriceEstimate"]
__version__ = "0.1.0"
