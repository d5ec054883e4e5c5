"""Stochastic approximation simulation and limit-law analysis toolkit."""

__version__ = "0.1.0"
