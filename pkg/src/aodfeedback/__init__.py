"""AoD-adaptive subspace codebooks for FDD massive-MIMO channel feedback.

Link-level Monte Carlo simulation of ray-based multi-user channels with
zero-forcing precoding, the subspace codebook and its baselines, MUSIC AoD
acquisition, and closed-form rate-gap / feedback-bit bounds.
"""
__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND  # noqa: E402
from .channel import ArrayGeometry, PathSet, steering_matrix, steering_vector  # noqa: E402
from .codebook import Codebook, build_rvq, build_subspace, quantize  # noqa: E402

__all__ = [
    "__version__",
    "KERNEL_BACKEND",
    "ArrayGeometry",
    "PathSet",
    "steering_matrix",
    "steering_vector",
    "Codebook",
    "build_rvq",
    "build_subspace",
    "quantize",
]
