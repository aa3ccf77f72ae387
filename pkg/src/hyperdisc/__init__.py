"""Kernel-based discovery of functional dependencies (hypergraphs) in sample data."""

from .data import Dataset, derive_target, load_csv, normalize, write_csv
from .discovery import DiscoveryConfig, HypergraphResult, discover_graph
from .kernels import KernelSpec, gram
from .regression import fit, noise_to_signal, select_gamma

__version__ = "0.1.0"

__all__ = [
    "Dataset", "load_csv", "write_csv", "normalize", "derive_target",
    "KernelSpec", "gram", "fit", "noise_to_signal", "select_gamma",
    "DiscoveryConfig", "HypergraphResult", "discover_graph",
]
