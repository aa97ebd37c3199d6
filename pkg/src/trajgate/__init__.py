"""Deterministic trajectory-feasibility toolkit: coverage-bounded trajectory
sets pruned against drivable-area polygons derived from HD-map lanes."""

__version__ = "0.1.0"
