"""Hydrogen jet centerline modelling: integral-model oracle and physics-informed graph networks."""

__version__ = "0.1.0"
