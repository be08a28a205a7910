"""Hierarchical RL with advantage-weighted information maximization, in numpy."""

__version__ = "0.1.0"
