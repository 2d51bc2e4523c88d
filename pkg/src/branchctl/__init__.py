"""Simulation and numerical control of branching diffusion processes."""

__version__ = "0.1.0"
