"""Partial-beam machine-learning beam alignment for multi-user mmWave massive MIMO."""

__version__ = "0.1.0"
