"""Spectral analysis of moderately high-dimensional linear time series."""

__version__ = "0.1.0"
