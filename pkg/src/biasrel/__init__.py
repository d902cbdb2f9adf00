"""Reliability analysis of gender-bias scores in static word-embedding ensembles."""

__version__ = "0.1.0"
