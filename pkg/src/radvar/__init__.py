"""Numerical laboratory for bounded radial variation on near half spaces."""

__version__ = "0.1.0"
