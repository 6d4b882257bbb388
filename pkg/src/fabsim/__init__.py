"""Simulation and algorithms for mobile in situ robotic fabrication."""

__version__ = "0.1.0"
