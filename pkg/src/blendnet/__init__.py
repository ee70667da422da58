"""Polymer blend compatibility prediction from repeating-unit structures."""

__version__ = "0.1.0"
