"""Pseudo-spectral simulator and analysis toolkit for the 3D
Navier-Stokes-Voigt equations on a periodic box."""

__version__ = "0.1.0"
