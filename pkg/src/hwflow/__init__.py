"""Simulation and numerical checks for sticky Brownian flows and their lattice analogue."""
__version__ = "0.1.0"
