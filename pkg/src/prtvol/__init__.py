"""Radiance-transfer lighting and validation tools for volumetric density fields."""

__version__ = "0.1.0"
