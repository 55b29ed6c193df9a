"""Horizontal and vertical regression estimators for panel counterfactuals."""

__version__ = "0.1.0"
