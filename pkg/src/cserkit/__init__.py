"""Syntax-aware pre-training toolkit for Chinese semantic error recognition."""

__version__ = "0.1.0"
