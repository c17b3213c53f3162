"""Hedging-portfolio optimization for load-serving entities."""
__version__ = '0.3.0'
