"""Symbolic multisymplectic field theory toolkit."""

__version__ = "0.1.0"
