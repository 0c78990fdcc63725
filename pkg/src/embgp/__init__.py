"""Embedded weight-space GP model-error calibration toolkit."""

__version__ = "0.1.0"
