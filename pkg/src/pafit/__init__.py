"""Preferential attachment with fitness: simulation and limit laws."""

__version__ = "0.1.0"
