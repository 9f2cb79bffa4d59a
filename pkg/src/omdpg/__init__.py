"""Marginal-Q multi-agent deterministic policy gradients with grouped actors and an ensemble critic."""
__version__ = "0.1.0"
