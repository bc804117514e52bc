"""Purified-state dynamics, unravelings and operator-valued phases for Lindblad models."""

__version__ = "0.1.0"
