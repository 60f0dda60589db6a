"""Numerical laboratory for Bayesian estimation in singular mixture models."""

__version__ = "0.1.0"
