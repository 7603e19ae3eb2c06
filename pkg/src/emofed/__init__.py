"""Desk-scale federated learning simulation for long-tailed emoji-category prediction."""

__version__ = "0.1.0"
