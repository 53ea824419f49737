"""Hot codeword-search kernels.

The compiled extension is used when it was built; otherwise the NumPy
versions in :mod:`._pure` are used. Set ``AODFEEDBACK_KERNELS=python`` to
force the fallback.
"""
import os

import numpy as np

from . import _pure

BACKEND = "python"
_impl = _pure

if os.environ.get("AODFEEDBACK_KERNELS", "").lower() != "python":
    try:
        from . import _ext as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _pure


def _c(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def best_codeword(codewords, x):
    # one GEMV wins over the scalar loop past a few thousand entries
    if codewords.size > 1 << 13:
        return _pure.best_codeword(_c(codewords), _c(x))
    return _impl.best_codeword(_c(codewords), _c(x))


def best_subspace_codeword(inner, b, gram):
    return _impl.best_subspace_codeword(_c(inner), _c(b), _c(gram))


def assign_chordal(samples, codewords):
    # BLAS beats the scalar loop once the problem is large
    if codewords.shape[0] >= 64 and samples.shape[0] * codewords.shape[0] > 1 << 15:
        return _pure.assign_chordal(_c(samples), _c(codewords))
    return _impl.assign_chordal(_c(samples), _c(codewords))


__all__ = ["BACKEND", "best_codeword", "best_subspace_codeword", "assign_chordal"]
