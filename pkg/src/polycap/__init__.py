"""Discrete polynomial capacities, Poincare constants and cube synthesis."""

__version__ = "0.1.0"
