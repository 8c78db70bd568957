"""Numerical experiments for ergodic potential mean field games on the circle."""

__version__ = "0.1.0"
