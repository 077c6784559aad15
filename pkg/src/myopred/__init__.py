"""Longitudinal childhood-myopia prediction from fundus image sequences."""

__version__ = "0.1.0"
