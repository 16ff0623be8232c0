"""Monte Carlo Picard iteration for heat and Navier-Stokes type equations in whole space."""

__version__ = "0.1.0"
