"""Asymptotic arbitrage under small proportional transaction costs: finite-market
LP tools, quantitative Halmos-Savage solvers and an exact continuous-time example."""

__version__ = "0.1.0"
