"""Poisson-Dirichlet coupling of the prime factors of a random integer."""

__version__ = "0.1.0"
