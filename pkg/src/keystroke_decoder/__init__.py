"""Keystroke decoding from synthetic M/EEG recordings."""

__version__ = "0.3.0"
