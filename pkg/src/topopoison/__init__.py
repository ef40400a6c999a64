"""Simulator for SDN link discovery and topology poisoning via flow entries."""

__version__ = "0.1.0"
