"""Numerical laboratory for the weighted critical-exponent problem
``-div(p grad u) = u^(q-1) + lambda u`` with ``q = 2n/(n-2)``."""

__version__ = "0.1.0"
