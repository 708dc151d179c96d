"""Spectrum cartography and attention-based fusion toolkit for LEO networks."""

__version__ = "0.1.0"
