"""Quantum key distribution coexisting with high-power classical WDM traffic."""

__version__ = "0.1.0"
