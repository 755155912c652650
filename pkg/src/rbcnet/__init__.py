"""Reconnaissance Blind Chess agent trained purely from observation histories."""

__version__ = "0.1.0"
