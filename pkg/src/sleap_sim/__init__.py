"""Quasi-static simulator for a suction-augmented three-fingered hand."""

__version__ = "0.1.0"
