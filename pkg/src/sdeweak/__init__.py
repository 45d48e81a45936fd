"""Weak approximation of Stratonovich SDEs via moment-matched splitting and Runge-Kutta flows."""

__version__ = "0.1.0"
