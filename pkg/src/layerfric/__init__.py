"""Frictional contact between stacked elastic layers on a compliant foundation."""

__version__ = "0.1.0"
