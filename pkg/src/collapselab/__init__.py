"""Numerical laboratory for continuous-spontaneous-localization collapse models."""

__version__ = "0.1.0"
