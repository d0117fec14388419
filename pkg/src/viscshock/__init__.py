"""Numerical laboratory for viscous shock waves and diffusion waves."""

__version__ = "0.1.0"
