"""Numerical certification toolkit for right-handed Reeb flows on the 3-sphere."""

__version__ = "0.1.0"
