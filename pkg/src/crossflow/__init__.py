"""Trajectory optimization for lane-free, signal-free intersection crossing.

The package assembles a free-final-time optimal control problem for a fleet of
connected vehicles (collocated dynamics, dual-certificate collision
constraints) and solves it with an in-repo interior-point method.
"""

__version__ = "0.1.0"
