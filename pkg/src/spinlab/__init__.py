"""Hardcore and Ising Gibbs distributions near tree uniqueness: samplers,
exact oracles, spectral-independence estimators, deterministic counting and
lower-bound generating functions."""

__version__ = "0.1.0"
