"""Compressed-sensing MRI reconstruction with adversarially trained generators."""

__version__ = "0.1.0"
