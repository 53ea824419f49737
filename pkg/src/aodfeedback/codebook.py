"""Channel-direction codebooks and the chordal-distance quantizer.

Codewords are stored as rows. Four constructions are provided:

* ``rvq``: i.i.d. isotropic unit vectors,
* ``subspace`` / ``subspace_lloyd``: ``c_i = A w_i / ||A w_i||`` built on
  a steering matrix ``A`` from an RVQ or Lloyd-trained inner codebook,
* ``rotated``: ``R^{1/2} u_i`` normalized, the statistics-rotated baseline.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .channel import complex_normal

MAX_CODEBOOK_SIZE = 1 << 20
KINDS = ("rvq", "subspace", "subspace_lloyd", "rotated", "lloyd")


def codebook_size(bits: float) -> int:
    """Number of codewords for ``bits`` feedback bits (real ``bits`` rounds)."""
    if bits < 0:
        raise ValueError("bits must be non-negative")
    n = max(1, int(round(2.0 ** bits)))
    if n > MAX_CODEBOOK_SIZE:
        raise ValueError(f"codebook with {bits:g} bits exceeds the cap of 2^20 codewords")
    return n


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.maximum(norms, 1e-300)


class Codebook:
    """A set of unit-norm codewords (rows) of dimension ``dim``.

    Subspace codebooks keep their steering ``basis`` and ``inner`` codebook
    and only materialize the ``M``-dimensional rows on demand; quantizing
    against them works in the ``P``-dimensional coordinates.
    """

    def __init__(self, vectors=None, bits: float = 0.0, kind: str = "rvq",
                 basis=None, inner=None, history=None):
        if kind not in KINDS:
            raise ValueError(f"unknown codebook kind {kind!r}")
        self.bits = float(bits)
        self.kind = kind
        self.basis = None if basis is None else np.asarray(basis, dtype=complex)
        self.inner = None if inner is None else np.asarray(inner, dtype=complex)
        self.history = history
        if vectors is not None:
            v = np.asarray(vectors, dtype=complex)
            if v.ndim != 2:
                raise ValueError("codewords must be a 2-D array of rows")
            self.__dict__["vectors"] = v
        elif self.basis is None or self.inner is None:
            raise ValueError("need explicit vectors or a basis with an inner codebook")

    @cached_property
    def vectors(self) -> np.ndarray:
        return _normalize_rows(self.inner @ self.basis.T)

    @cached_property
    def gram(self) -> np.ndarray:
        return self.basis.conj().T @ self.basis

    @property
    def is_subspace(self) -> bool:
        return self.basis is not None and self.inner is not None

    @property
    def size(self) -> int:
        return (self.inner if self.is_subspace else self.vectors).shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[0] if self.is_subspace else self.vectors.shape[1]

    def __len__(self):
        return self.size

    def __repr__(self):
        return f"Codebook(kind={self.kind!r}, size={self.size}, dim={self.dim}, bits={self.bits:g})"

    def prefix(self, count: int) -> "Codebook":
        """The first ``count`` codewords; RVQ draws are nested this way."""
        if self.is_subspace:
            return Codebook(bits=np.log2(count), kind=self.kind, basis=self.basis,
                            inner=self.inner[:count])
        return Codebook(self.vectors[:count], np.log2(count), self.kind)


@dataclass(frozen=True)
class QuantizationOutcome:
    index: int
    chordal_error: float
    magnitude: float


def build_rvq(rng: np.random.Generator, dim: int, bits: float) -> Codebook:
    """Random vector quantization codebook: ``2^bits`` isotropic unit vectors.

    Rows come from one Gaussian draw, so a codebook with fewer bits from the
    same generator state is a prefix of a larger one.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    n = codebook_size(bits)
    return Codebook(_normalize_rows(complex_normal(rng, (n, dim))), bits, "rvq")


def build_subspace(basis: np.ndarray, inner: Codebook | np.ndarray, kind: str | None = None) -> Codebook:
    """AoD-adaptive subspace codebook ``c_i = A w_i``, renormalized."""
    basis = np.asarray(basis, dtype=complex)
    if basis.ndim == 1:
        basis = basis[:, None]
    w = inner.vectors if isinstance(inner, Codebook) else np.asarray(inner, dtype=complex)
    if w.ndim == 1:
        w = w[:, None] if basis.shape[1] == 1 else w[None, :]
    if w.shape[1] != basis.shape[1]:
        raise ValueError(
            f"inner codewords have dimension {w.shape[1]} but the basis has {basis.shape[1]} columns"
        )
    if kind is None:
        kind = "subspace_lloyd" if isinstance(inner, Codebook) and inner.kind == "lloyd" else "subspace"
    bits = inner.bits if isinstance(inner, Codebook) else float(np.log2(w.shape[0]))
    return Codebook(bits=bits, kind=kind, basis=basis, inner=w)


_NEIGHBOURS = 64
_ROW_CHUNK = 1024


def _neighbour_table(c: np.ndarray, count: int):
    """For each codeword: its ``count`` nearest codewords (sorted by index,
    itself included) and the principal angle to the nearest one left out."""
    k = c.shape[0]
    nbr = np.empty((k, count), dtype=np.intp)
    radius = np.empty(k)
    for start in range(0, k, _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, k)
        g = np.abs(c[start:stop].conj() @ c.T)
        part = np.argpartition(-g, count, axis=1)
        rows = np.arange(stop - start)
        nbr[start:stop] = np.sort(part[:, :count], axis=1)
        radius[start:stop] = np.arccos(np.clip(g[rows, part[:, count]], 0.0, 1.0))
    return nbr, radius


def _assign(x: np.ndarray, c: np.ndarray, labels: np.ndarray | None):
    """Exact nearest-codeword assignment, searching near the previous label when possible.

    With principal angles ``t`` (a metric on directions), a codeword outside
    the neighbour list of ``c_l`` is at least ``radius_l - t(x, c_l)`` from
    ``x``, so when ``2 t(x, c_l) < radius_l`` the winner is in the list.
    Ties still resolve to the lowest index because lists are index-sorted.
    """
    k = c.shape[0]
    if labels is None or k <= 4 * _NEIGHBOURS:
        return _kernels.assign_chordal(x, c)
    nbr, radius = _neighbour_table(c, _NEIGHBOURS)
    own = np.abs(np.sum(x.conj() * c[labels], axis=1))
    theta = np.arccos(np.clip(own, 0.0, 1.0))
    local = 2.0 * theta < radius[labels] - 1e-12
    new_labels = np.empty_like(labels)
    best = np.empty(x.shape[0])
    idx = np.flatnonzero(local)
    for start in range(0, idx.size, 8192):
        sel = idx[start:start + 8192]
        cand = nbr[labels[sel]]
        s = np.abs(np.einsum("nd,nld->nl", x[sel].conj(), c[cand])) ** 2
        j = np.argmax(s, axis=1)
        rows = np.arange(sel.size)
        new_labels[sel] = cand[rows, j]
        best[sel] = s[rows, j]
    far = np.flatnonzero(~local)
    if far.size:
        new_labels[far], best[far] = _kernels.assign_chordal(x[far], c)
    return new_labels, best


def lloyd(training: np.ndarray, init: np.ndarray, max_iters: int = 100, rel_tol: float = 1e-4):
    """Generalized Lloyd iteration under the chordal distortion ``1 - |x^H c|^2``.

    Codewords move to the principal eigenvector of their cluster's outer
    product sum. An empty cluster is re-seeded with the worst-matched
    sample of the most populated cluster.

    Returns
    -------
    codewords : ndarray (K, D)
    history : list of float
        Mean distortion after each assignment step (non-increasing).
    """
    x = np.ascontiguousarray(training, dtype=complex)
    c = _normalize_rows(np.array(init, dtype=complex))
    k, d = c.shape
    n = x.shape[0]
    labels, best = _assign(x, c, None)
    dist = 1.0 - best
    history = [float(dist.mean())]
    pair = np.arange(d * d)
    outer = (x[:, :, None] * x[:, None, :].conj()).reshape(n, d * d)
    for _ in range(max_iters):
        # per-cluster sums of x x^H via weighted bincount over the D*D entries
        flat = (labels[:, None] * (d * d) + pair[None, :]).ravel()
        s = (np.bincount(flat, outer.real.ravel(), k * d * d)
             + 1j * np.bincount(flat, outer.imag.ravel(), k * d * d)).reshape(k, d, d)
        counts = np.bincount(labels, minlength=k)
        _, vecs = np.linalg.eigh(s)
        new_c = vecs[:, :, -1]
        for e in np.flatnonzero(counts == 0):
            big = int(np.argmax(counts))
            members = np.flatnonzero(labels == big)
            worst = members[int(np.argmax(dist[members]))]
            new_c[e] = x[worst]
            # keep the repair from picking the same sample twice
            dist[worst] = -np.inf
            counts[e] = 1
            counts[big] -= 1
        c = _normalize_rows(new_c)
        labels, best = _assign(x, c, labels)
        dist = 1.0 - best
        history.append(float(dist.mean()))
        prev, cur = history[-2], history[-1]
        if cur <= 0.0 or (prev - cur) <= rel_tol * prev:
            break
    return c, history


def build_lloyd_inner(rng: np.random.Generator, dim: int, bits: float,
                      training_count: int | None = None, max_iters: int = 100,
                      rel_tol: float = 1e-4) -> Codebook:
    """Lloyd-trained inner codebook on isotropic training directions."""
    n = codebook_size(bits)
    if training_count is None:
        training_count = max(50 * n, 10_000)
    if training_count < 50 * n:
        raise ValueError(f"training_count must be at least 50 * 2^B = {50 * n}")
    init = build_rvq(rng, dim, bits).vectors
    training = _normalize_rows(complex_normal(rng, (training_count, dim)))
    c, history = lloyd(training, init, max_iters, rel_tol)
    return Codebook(c, bits, "lloyd", history=history)


def sqrt_psd(r: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Hermitian square root with eigenvalues clipped at zero."""
    r = np.asarray(r, dtype=complex)
    r = (r + r.conj().T) / 2
    lam, u = np.linalg.eigh(r)
    scale = max(1.0, float(np.max(np.abs(lam))))
    if lam[0] < -tol * scale:
        raise ValueError(f"correlation matrix is not PSD (eigenvalue {lam[0]:.3g})")
    return (u * np.sqrt(np.clip(lam, 0.0, None))) @ u.conj().T


def rotate_codebook(sqrt_r: np.ndarray, base: np.ndarray, bits: float) -> Codebook:
    return Codebook(_normalize_rows(base @ sqrt_r.T), bits, "rotated")


def build_rotated_statistics(correlation: np.ndarray, bits: float, rng: np.random.Generator,
                             base: np.ndarray | None = None) -> Codebook:
    """Statistics-rotated codebook ``R^{1/2} u_i / ||R^{1/2} u_i||``.

    ``base`` may carry pre-drawn RVQ rows ``u_i`` so that several users or
    sweep points share one draw.
    """
    s = sqrt_psd(correlation)
    if base is None:
        base = build_rvq(rng, s.shape[0], bits).vectors
    return rotate_codebook(s, base, bits)


def rotated_from_steering(steering: np.ndarray, base: np.ndarray, bits: float) -> Codebook:
    """Rotated codebook for ``R = A A^H`` using a thin SVD of ``A``."""
    u, sv, _ = np.linalg.svd(steering, full_matrices=False)
    proj = (base.conj() @ u).conj()  # rows: u^H base_i
    return Codebook(_normalize_rows((proj * sv) @ u.T), bits, "rotated")


def quantize(h, codebook: Codebook) -> QuantizationOutcome:
    """Pick the codeword nearest to the direction of ``h`` in chordal distance.

    Ties go to the lowest index.
    """
    h = np.asarray(getattr(h, "entries", h), dtype=complex)
    mag = float(np.linalg.norm(h))
    if mag == 0.0:
        raise ValueError("cannot quantize a zero channel")
    if h.shape[0] != codebook.dim:
        raise ValueError(f"channel has {h.shape[0]} entries, codebook dimension is {codebook.dim}")
    hd = h / mag
    if codebook.is_subspace:
        idx, score = _kernels.best_subspace_codeword(codebook.inner, codebook.basis.conj().T @ hd,
                                                     codebook.gram)
    else:
        idx, score = _kernels.best_codeword(codebook.vectors, hd)
    return QuantizationOutcome(idx, float(min(1.0, max(0.0, 1.0 - score))), mag)


def codeword(codebook: Codebook, index: int) -> np.ndarray:
    if codebook.is_subspace:
        v = codebook.basis @ codebook.inner[index]
        return v / np.linalg.norm(v)
    return codebook.vectors[index]


# serialization ---------------------------------------------------------------

_MAGIC = b"AODCB\x00\x01\x00"
_HEADER = struct.Struct("<IQdH")


def save_codebook(path, codebook: Codebook, binary: bool = True) -> None:
    """Write dimension, count, bits, kind and row-major codewords.

    Binary layout (little-endian): 8-byte magic, ``uint32`` dim, ``uint64``
    count, ``float64`` bits, ``uint16`` kind length, kind (UTF-8), then
    ``count * dim`` interleaved (real, imag) ``float64`` pairs. The text
    form has a ``kind dim count bits`` header line followed by one
    codeword per line as interleaved values.
    """
    v = np.ascontiguousarray(codebook.vectors, dtype="<c16")
    kind = codebook.kind.encode()
    path = Path(path)
    if binary:
        with path.open("wb") as f:
            f.write(_MAGIC)
            f.write(_HEADER.pack(v.shape[1], v.shape[0], codebook.bits, len(kind)))
            f.write(kind)
            f.write(v.view("<f8").tobytes())
        return
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"{codebook.kind} {v.shape[1]} {v.shape[0]} {codebook.bits!r}\n")
        for row in v.view("<f8").reshape(v.shape[0], -1):
            f.write(" ".join(format(x, ".17g") for x in row) + "\n")


def load_codebook(path) -> Codebook:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(_MAGIC):
        off = len(_MAGIC)
        dim, count, bits, klen = _HEADER.unpack_from(raw, off)
        off += _HEADER.size
        kind = raw[off:off + klen].decode()
        off += klen
        data = np.frombuffer(raw, dtype="<f8", count=2 * dim * count, offset=off)
        return Codebook(data.view("<c16").reshape(count, dim).astype(complex), bits, kind)
    lines = raw.decode("utf-8").splitlines()
    kind, dim, count, bits = lines[0].split()
    dim, count = int(dim), int(count)
    data = np.array([[float(t) for t in ln.split()] for ln in lines[1:1 + count]], dtype=float)
    v = data.reshape(count, dim, 2)
    return Codebook(v[..., 0] + 1j * v[..., 1], float(bits), kind)
