"""Animatable human-scene Gaussian reconstruction core package"""

__version__ = "0.1.0"
