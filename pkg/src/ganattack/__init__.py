"""Generative adversarial attacks on graph neural networks."""

__version__ = "0.1.0"
