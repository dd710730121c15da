"""Deterministic simulator and trace analytics for a port-scale vehicular mesh testbed."""

__version__ = "0.1.0"
