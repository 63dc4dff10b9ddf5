"""Bearing degradation stage labeling and classification."""

__version__ = "0.1.0"
