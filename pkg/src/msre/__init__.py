"""Harmonic minimal surfaces in fractional Brownian random environments."""

__version__ = "0.1.0"
