"""Numerical laboratory for boundary control systems and observer-based stabilization."""

__version__ = "0.1.0"
