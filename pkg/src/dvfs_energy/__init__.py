"""Analytical CPU energy model under DVFS, with fitting and energy-optimal
frequency search."""

__version__ = "0.1.0"
