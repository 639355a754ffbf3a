"""Pipe-roughness calibration of water distribution network models from sparse pressure data."""

__version__ = "0.1.0"
