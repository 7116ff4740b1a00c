"""Learning non-autonomous dynamical systems with one-step flow-map models."""

__version__ = "1.0.0"
