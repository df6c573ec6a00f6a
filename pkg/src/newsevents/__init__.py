"""Detecting entity-specific events in news text with sentence embeddings."""

__version__ = "0.1.0"
