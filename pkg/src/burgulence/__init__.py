"""Kick-forced generalized Burgers equation: simulator and measurement harness."""

__version__ = "0.1.0"
