"""Encoding-free QUBO formulation of microgrid formation, with exact and annealing solvers."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
