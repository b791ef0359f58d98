"""Probabilistic reliability management toolkit for transmission grids."""

__version__ = "0.1.0"
