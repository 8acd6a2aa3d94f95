"""Joint non-linear motion regression for multi-reference video frame interpolation."""

__version__ = "0.1.0"
