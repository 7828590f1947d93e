"""Entropy-based validated projections and discursive-community analytics."""

__version__ = "0.1.0"
