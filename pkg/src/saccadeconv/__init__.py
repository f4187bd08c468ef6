"""Saccade-based conversion of static images into neuromorphic event streams."""

__version__ = "0.1.0"
