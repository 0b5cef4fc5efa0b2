"""Typed graph knowledge bases of protein interactions, compiled to Kappa."""

__version__ = "0.1.0"
