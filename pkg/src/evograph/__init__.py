"""Moran process on directed evolutionary graphs: constructions, simulators, exact solvers."""

__version__ = "0.1.0"
