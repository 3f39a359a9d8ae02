"""Numerical toolkit for four-dimensional almost-Kaehler geometry and symplectic curvature flow."""

__version__ = "0.1.0"
