"""Stacked temporal attention video encoder, built from scratch on numpy."""

__version__ = "0.1.0"
