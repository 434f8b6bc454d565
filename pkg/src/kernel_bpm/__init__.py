"""Kernel interpolation as a Bayes point machine for GP classification."""

__version__ = "0.1.0"
