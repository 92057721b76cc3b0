"""Weighted Steklov eigenvalues on punctured disks."""

__version__ = "0.1.0"
