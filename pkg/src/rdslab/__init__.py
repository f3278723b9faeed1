"""Numerical laboratory for random dynamical systems on the 2-torus."""

__version__ = "0.1.0"
