"""Selective entropy optimisation via committee consistency, at desk scale."""

__version__ = "0.1.0"
