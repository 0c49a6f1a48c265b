"""Toy trainer consuming the curation toolkit file formats."""

__version__ = "0.1.0"
