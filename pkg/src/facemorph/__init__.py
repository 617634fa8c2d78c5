"""Geometric and morphometric evaluation of 3D facial reconstructions."""

__version__ = "0.1.0"
