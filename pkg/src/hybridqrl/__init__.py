"""Hybrid quantum-classical deep Q-learning on miniature pixel environments."""

__version__ = "0.1.0"
