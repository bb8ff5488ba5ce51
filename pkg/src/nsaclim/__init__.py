"""Numerical laboratory for the Stokes/Allen-Cahn system and its sharp-interface limit."""

__version__ = "0.1.0"
