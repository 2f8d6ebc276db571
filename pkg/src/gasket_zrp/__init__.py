"""Zero-range process on Sierpinski gasket graphs and its Ornstein-Uhlenbeck fluctuation limit."""

from .gasket import GasketGraph, build_gasket
from .kernels import BACKEND
from .spectrum import SpectralBasis, eigendecompose

__version__ = "0.1.0"

__all__ = ["GasketGraph", "build_gasket", "SpectralBasis", "eigendecompose", "BACKEND", "__version__"]
