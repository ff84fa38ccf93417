"""Covariant Schroedinger semigroups on weighted graphs."""

__version__ = "0.1.0"
