"""Recursive trees with independent fitnesses: simulation and limit laws."""

__version__ = "0.1.0"
