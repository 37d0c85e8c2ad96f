"""Iterative feedforward learning for unknown nonlinear plants with GP models."""

__version__ = "0.1.0"
