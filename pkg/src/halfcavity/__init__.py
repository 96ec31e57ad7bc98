"""Photon correlations of a laser-driven Ba+ ion in front of a distant mirror."""

__version__ = "0.1.0"
