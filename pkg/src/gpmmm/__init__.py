"""Gaussian-process marketing mix models.

Library, simulator, and CLI for static nonlinear and time-varying linear
GP-based MMMs: estimation, conflation analysis across a factorial simulation
grid, budget optimization under each model, and adaptive spending tests that
tell the two model classes apart.
"""

__version__ = "0.1.0"
