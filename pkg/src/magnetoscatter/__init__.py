"""
Numerical scattering and inverse scattering for the nonlinear magnetic
Schroedinger equation.
"""

__version__ = "0.1.0"
