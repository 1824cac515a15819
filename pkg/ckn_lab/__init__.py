"""Numerical partial-regularity lab for the incompressible Navier-Stokes equations on a periodic box."""

__version__ = "0.1.0"
