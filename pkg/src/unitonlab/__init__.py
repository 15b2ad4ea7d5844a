"""Tools for deciding finiteness of uniton numbers of harmonic maps into U(n)."""

__version__ = "0.1.0"
