"""Constructive normal-form reduction and spectral evolution on T^nu x T."""

__version__ = "0.1.0"
