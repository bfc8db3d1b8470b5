"""Numerical toolkit for Lorentzian time separation, Busemann functions and splitting tests."""

__version__ = "0.1.0"
