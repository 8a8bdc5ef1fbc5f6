"""Galerkin-scale laboratory for Dirichlet forms on Wiener space with an
unbounded diagonal diffusion operator."""

__version__ = "0.1.0"
