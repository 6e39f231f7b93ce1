"""D-bar reconstruction for planar conductivity imaging and curve-level kernels."""

__version__ = "0.1.0"
