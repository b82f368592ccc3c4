"""Synthetic scenes, the desk-scale predictor, training and the CLI."""
