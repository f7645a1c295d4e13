"""Correlated default timing in large loan portfolios.

Finite-pool Monte Carlo, limiting-loss solvers (moment closure, explicit SPDE
finite differences, mean-field fixed point) and the risk statistics used to
compare them.
"""

__version__ = "0.1.0"
