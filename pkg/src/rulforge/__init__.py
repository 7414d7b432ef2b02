"""Remaining-useful-life estimation from turbofan run-to-failure data."""

__version__ = "0.1.0"
