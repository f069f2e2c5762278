"""Galerkin convergence laboratory for the 2D periodic Navier–Stokes equations.

Spectral fields, a pseudo-spectral steady/transient solver, intrinsic
expansion extraction, comparability analysis, fractional space-time norms
and ladder diagnostics.
"""

__version__ = "0.1.0"
