"""Retrieval-augmented multimodal neural machine translation pipeline."""

__version__ = "0.1.0"
