"""Sliding-window long-document classification and retrieval over attention and selective-scan encoders."""

__version__ = "0.1.0"
