"""Learned cost model based cross-engine SQL optimizer."""

__version__ = "0.1.0"
