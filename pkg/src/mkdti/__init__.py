"""Multi-kernel drug-target interaction prediction.

Graph attention embeddings become per-layer Gaussian interaction profile
kernels, which are fused with base similarity kernels and fed to a dual
Laplacian regularized least squares predictor.
"""
from .estimator import MKDTI
from .exceptions import ConfigError, DataError, NumericalError

__all__ = ["MKDTI", "ConfigError", "DataError", "NumericalError"]
__version__ = "0.1.0"
