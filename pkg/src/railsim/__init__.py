"""Procedural railway simulation: routes, worlds, sensors and datasets."""

__version__ = "0.1.0"
