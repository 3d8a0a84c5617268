from .basis import SphereBasis, TorusBasis, default_degree, make_basis
from .config import ManifoldConfig
from .table import ShellKey, SpectrumTable, build_spectrum, shell_of
from .triads import TriadTensor, build_triads

__all__ = [
    "ManifoldConfig",
    "ShellKey",
    "SpectrumTable",
    "SphereBasis",
    "TorusBasis",
    "TriadTensor",
    "build_spectrum",
    "build_triads",
    "default_degree",
    "make_basis",
    "shell_of",
]
