"""Chaos expansions for products of Brownian-Poisson multiple stochastic integrals."""

__version__ = "0.1.0"
