"""Markovian age-of-information models for gossip networks."""

__version__ = "0.1.0"
