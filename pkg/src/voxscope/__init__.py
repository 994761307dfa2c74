"""Desk-scale remote volume visualization pipeline."""

__version__ = "0.1.0"
