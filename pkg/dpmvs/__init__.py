"""Dirichlet process mixture clustering with variable selection."""

__version__ = "0.1.0"
