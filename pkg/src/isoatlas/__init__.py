"""
isoatlas: bidiagonal coordinates for isospectral symmetric tridiagonal
matrices, with QR-step and Toda-flow dynamics in those coordinates.
"""

__version__ = "1.0.0"
