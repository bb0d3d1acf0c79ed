"""Physically consistent articulated-body dynamics reconstruction and benchmark."""

__version__ = "0.1.0"
