"""Approximation lab for the linearized Landau equation with specular reflection."""

__version__ = "0.1.0"
