"""Phylogenetic invariants and low-rank distances for binary trait data."""

__version__ = "0.1.0"

__all__ = ["__version__"]
