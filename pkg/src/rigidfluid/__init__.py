"""Certification toolkit for prescribed rigid-body motion in a compressible perfect fluid."""
__version__ = "0.1.0"
