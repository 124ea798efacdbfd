"""Expectation-value estimation with one measured bit per state preparation."""

__version__ = "0.1.0"
