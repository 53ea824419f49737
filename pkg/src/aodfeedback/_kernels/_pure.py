"""NumPy implementations of the codeword-search kernels.

These are the reference versions; the Cython module mirrors their
signatures and tie-breaking exactly (first maximum wins).
"""
import numpy as np

_CHUNK = 2048


def best_codeword(codewords, x):
    """Index and score of the row of ``codewords`` maximizing ``|c^H x|^2``."""
    scores = np.abs(codewords.conj() @ x) ** 2
    idx = int(np.argmax(scores))
    return idx, float(scores[idx])


def best_subspace_codeword(inner, b, gram):
    """Search a subspace codebook without materializing ``A @ w``.

    For codewords ``c_i = A w_i / ||A w_i||`` and a unit channel direction
    ``h``, ``|h^H c_i|^2 = |w_i^H b|^2 / (w_i^H G w_i)`` with ``b = A^H h``
    and ``G = A^H A``.
    """
    num = np.abs(inner.conj() @ b) ** 2
    den = np.einsum("ip,pq,iq->i", inner.conj(), gram, inner, optimize=True).real
    scores = num / np.maximum(den, 1e-300)
    idx = int(np.argmax(scores))
    return idx, float(scores[idx])


def _outer_features(x, sign=1.0):
    """Real features with ``f(x) . g(c) = |x^H c|^2``.

    Built from the Hermitian outer product: diagonal moduli plus the real and
    imaginary parts of the strict upper triangle, scaled by sqrt(2).
    """
    d = x.shape[1]
    iu, ju = np.triu_indices(d, 1)
    cross = x[:, iu].conj() * x[:, ju]
    r2 = np.sqrt(2.0)
    return np.concatenate([np.abs(x) ** 2, r2 * cross.real, sign * r2 * cross.imag], axis=1)


def assign_chordal(samples, codewords):
    """Nearest codeword (max ``|x^H c|^2``) for every row of ``samples``.

    Scores come from one real matrix product over outer-product features
    (``D^2`` columns), which avoids forming the complex inner products.
    """
    n = samples.shape[0]
    labels = np.empty(n, dtype=np.intp)
    best = np.empty(n, dtype=np.float64)
    cf = np.ascontiguousarray(_outer_features(codewords.conj(), -1.0).T)
    xf = _outer_features(samples)
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        s = xf[start:stop] @ cf
        lab = np.argmax(s, axis=1)
        labels[start:stop] = lab
        best[start:stop] = s[np.arange(stop - start), lab]
    return labels, best

