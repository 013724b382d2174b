"""Doppler-invariant complex-valued CNN for RF interference classification."""

__version__ = "0.1.0"
