"""Learned stiffness selection for admittance-controlled assembly."""

__version__ = "0.1.0"
