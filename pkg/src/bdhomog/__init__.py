"""Numerical homogenization of linear-growth free-discontinuity energies on lattices."""
__version__ = "0.1.0"
