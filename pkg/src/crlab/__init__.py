"""Numerical laboratory for CR-harmonic maps."""
