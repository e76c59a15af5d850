"""Slotted queueing simulation and Stein-method heavy-traffic checks."""

__version__ = "0.1.0"
