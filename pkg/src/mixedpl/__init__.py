"""Pairwise-likelihood estimation for mixed ordinal and gaussian responses."""
__version__ = "0.1.0"
