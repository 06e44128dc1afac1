"""Scalar-on-distribution regression with lagged functional instruments."""

__version__ = "0.1.0"
