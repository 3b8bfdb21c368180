"""Symbolic sprite features and interpretable tree surrogates for game-playing policies."""

__version__ = "0.1.0"
