"""Threshold regularity analysis for operators with radial Lagrangian sets."""

__version__ = "0.1.0"
