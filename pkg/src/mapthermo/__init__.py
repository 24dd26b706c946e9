"""Fluctuation statistics of work, heat and internal energy for small open
quantum systems, computed directly from the reduced dynamical map."""

__version__ = "0.1.0"
