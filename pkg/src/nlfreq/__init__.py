"""Nonlinear frequency response of ODE systems under periodic excitation."""

__version__ = "0.1.0"
