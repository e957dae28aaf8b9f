"""Exact symbolic and numerical verification that the spectral zeta value at the
origin of the conformally perturbed Laplacian on the noncommutative two-torus is
independent of the Weyl factor and the conformal class."""

__version__ = "0.1.0"
