"""Preprocessing of electroluminescence images of photovoltaic modules."""

__version__ = "0.1.0"
