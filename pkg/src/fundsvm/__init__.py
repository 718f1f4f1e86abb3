"""Fundamentals-driven bullish/bearish stock classification with Gaussian-kernel SVMs."""

__version__ = "0.1.0"
