"""Metropolis-Hastings samplers, diagnostics and a small experiment runner."""

__version__ = "0.1.0"
