"""Simulation and estimation toolkit for reference-dependent migration choice."""

__version__ = "0.1.0"
