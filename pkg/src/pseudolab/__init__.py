"""Semiclassical resolvent-norm laboratory for non-self-adjoint Schrodinger operators."""

__version__ = "0.1.0"
