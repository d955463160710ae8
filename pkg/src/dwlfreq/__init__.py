"""Distributed widely linear Kalman filtering for three-phase frequency estimation."""

__version__ = "0.1.0"
