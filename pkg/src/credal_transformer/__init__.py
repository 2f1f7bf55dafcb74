"""Credal attention and the Credal Transformer encoder."""

__version__ = "0.1.0"
