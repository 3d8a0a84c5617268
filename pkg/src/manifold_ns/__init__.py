"""Spectral Galerkin Navier-Stokes on the flat torus and the round sphere.

Subpackages and modules:

- :mod:`manifold_ns.spectrum`: eigenbases, shells, triad tensors, cache
- :mod:`manifold_ns.operators`: projections, inverse Laplacian, velocity, norms
- :mod:`manifold_ns.dynamics`: Galerkin right-hand side, time stepping, monitors
- :mod:`manifold_ns.trapping`: envelope, region partition, domination reports
- :mod:`manifold_ns.estimates`: multilinear eigenfunction estimate sweeps
- :mod:`manifold_ns.cli`: command-line entry point
"""

from .exceptions import (
    AssemblyError,
    BlowUpError,
    ConfigurationError,
    DimensionError,
    DomainError,
    InsufficientDataError,
    ManifoldNSError,
)
from .spectrum import ManifoldConfig, ShellKey, SpectrumTable, TriadTensor, build_spectrum, build_triads, shell_of

__version__ = "0.1.0"

__all__ = [
    "AssemblyError",
    "BlowUpError",
    "ConfigurationError",
    "DimensionError",
    "DomainError",
    "InsufficientDataError",
    "ManifoldConfig",
    "ManifoldNSError",
    "ShellKey",
    "SpectrumTable",
    "TriadTensor",
    "build_spectrum",
    "build_triads",
    "shell_of",
]
