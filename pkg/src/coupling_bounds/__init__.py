"""Coupling-based concentration bounds for additive functionals of Markov
processes, with exact and Monte Carlo verification oracles."""

__version__ = "0.1.0"
