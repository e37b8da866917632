"""Figures from coexsim trade-off CSVs; coupled to the CSV schema only."""

__version__ = "0.1.0"
