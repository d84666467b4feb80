"""Numerical laboratory for spacelike hypersurfaces in generalized Robertson-Walker spacetimes."""

__version__ = "0.1.0"
