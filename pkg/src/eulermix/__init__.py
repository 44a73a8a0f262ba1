"""Desk-scale numerics for the multiphasic incompressible Euler problem over traffic plans."""

__version__ = "0.1.0"
