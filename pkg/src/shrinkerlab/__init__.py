"""Numerical laboratory for Lagrangian self-similar solutions in Kaehler-Ricci soliton backgrounds."""

__version__ = "0.1.0"
