"""Discrete-event simulator of federated learning over a proof-of-work blockchain."""

__version__ = "0.1.0"
