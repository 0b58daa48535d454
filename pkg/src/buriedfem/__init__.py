"""Finite-element toolkit for elliptic problems with buried Dirichlet slits in 3D."""

__version__ = "0.1.0"
