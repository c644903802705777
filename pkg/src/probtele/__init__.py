"""Conclusive teleportation of cat-like n-qubit states over a partially entangled Bell pair."""

__version__ = "0.1.0"
