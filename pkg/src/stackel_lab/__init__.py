"""Numerical laboratory for three-dimensional Staeckel geodesic flows."""
from .algebra import Poly1
from .kernels import BACKEND
from .staeckel import StaeckelData, WorkingBox, vandermonde

__version__ = "0.1.0"

__all__ = ["BACKEND", "Poly1", "StaeckelData", "WorkingBox", "vandermonde", "__version__"]
