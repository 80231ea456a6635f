"""Evolving homeostatic neural cellular automata with time-lagged empowerment."""

__version__ = "0.1.0"
