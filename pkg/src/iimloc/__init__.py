"""Crowd localization with independent instance maps and learnable binarization."""

__version__ = "0.1.0"
