"""Geodesics, isometries and relativistic diffusion in Godel's rotating universe."""

from godelsim.geometry import ModelParams

__version__ = "0.1.0"

__all__ = ["ModelParams", "__version__"]
