"""Implicit-field ground truth, point-set and implicit losses, and autoencoder experiments."""

from ._backend import NAME as BACKEND
from .errors import InvalidInput, NumericalDegeneracy, ResourceLimit

__version__ = "0.1.0"
__all__ = ["BACKEND", "InvalidInput", "NumericalDegeneracy", "ResourceLimit"]
