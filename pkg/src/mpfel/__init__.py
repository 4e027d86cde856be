"""Multi-phase-field elasticity with pairwise rank-one relaxation."""

__version__ = "0.1.0"
