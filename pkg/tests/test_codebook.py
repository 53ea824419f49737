import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aodfeedback.channel import ArrayGeometry, complex_normal, draw_path_set, ensemble_correlation, steering_matrix
from aodfeedback.codebook import (
    Codebook, build_lloyd_inner, build_rotated_statistics, build_rvq, build_subspace, codebook_size,
    codeword, load_codebook, lloyd, quantize, rotated_from_steering, save_codebook, sqrt_psd,
)
from aodfeedback.codebook import _assign
from aodfeedback import _kernels


def _subspace_setup(seed=0, p=4, bits=6):
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry.ula(64)
    ps = draw_path_set(rng, p, geom)
    a = steering_matrix(geom, ps)
    return rng, a, a @ ps.gains, build_rvq(rng, p, bits)


def test_codebook_size_rules():
    assert codebook_size(0) == 1
    assert codebook_size(3) == 8
    assert codebook_size(2.5) == round(2 ** 2.5)
    assert codebook_size(20) == 1 << 20
    with pytest.raises(ValueError):
        codebook_size(21)
    with pytest.raises(ValueError):
        codebook_size(-1)


@given(seed=st.integers(0, 10**6), dim=st.integers(1, 16), bits=st.integers(0, 8))
@settings(deadline=None, max_examples=30)
def test_rvq_unit_rows_and_nested(seed, dim, bits):
    big = build_rvq(np.random.default_rng(seed), dim, bits + 2)
    small = build_rvq(np.random.default_rng(seed), dim, bits)
    assert np.allclose(np.linalg.norm(big.vectors, axis=1), 1, atol=1e-12)
    np.testing.assert_array_equal(big.vectors[: small.size], small.vectors)
    assert big.prefix(small.size).size == small.size


def test_subspace_codewords_lie_in_span_and_are_unit():
    _, a, _, inner = _subspace_setup()
    cb = build_subspace(a, inner)
    v = cb.vectors
    assert np.allclose(np.linalg.norm(v, axis=1), 1)
    q, _ = np.linalg.qr(a)
    resid = v.T - q @ (q.conj().T @ v.T)
    assert np.max(np.abs(resid)) < 1e-12
    assert cb.kind == "subspace" and cb.size == 64 and cb.dim == 64


def test_subspace_quantize_matches_materialized_search():
    _, a, h, inner = _subspace_setup(3)
    cb = build_subspace(a, inner)
    dense = Codebook(cb.vectors, cb.bits, "rvq")
    q1, q2 = quantize(h, cb), quantize(h, dense)
    assert q1.index == q2.index
    assert abs(q1.chordal_error - q2.chordal_error) < 1e-12
    np.testing.assert_allclose(codeword(cb, q1.index), dense.vectors[q1.index], atol=1e-12)


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 10**6))
def test_chordal_error_matches_definition(seed):
    rng = np.random.default_rng(seed)
    cb = build_rvq(rng, 6, 5)
    h = complex_normal(rng, 6)
    q = quantize(h, cb)
    hd = h / np.linalg.norm(h)
    scores = np.abs(cb.vectors.conj() @ hd) ** 2
    assert 0.0 <= q.chordal_error <= 1.0
    assert abs(q.chordal_error - (1 - scores.max())) < 1e-12
    assert abs(q.magnitude - np.linalg.norm(h)) < 1e-12


def test_quantize_invariant_to_phase_and_scale():
    _, a, h, inner = _subspace_setup(5)
    cb = build_subspace(a, inner)
    assert quantize(h, cb).index == quantize(3.7 * np.exp(1.1j) * h, cb).index


def test_quantize_errors():
    cb = build_rvq(np.random.default_rng(0), 4, 2)
    with pytest.raises(ValueError, match="zero"):
        quantize(np.zeros(4), cb)
    with pytest.raises(ValueError, match="dimension"):
        quantize(np.ones(5), cb)
    with pytest.raises(ValueError):
        build_subspace(np.ones((8, 3)), np.ones((4, 2)))


def test_p1_subspace_is_exact():
    geom = ArrayGeometry.ula(32)
    ps = draw_path_set(np.random.default_rng(0), 1, geom)
    a = steering_matrix(geom, ps)
    cb = build_subspace(a, build_rvq(np.random.default_rng(1), 1, 0))
    assert quantize(a @ ps.gains, cb).chordal_error < 1e-12


def test_lloyd_monotone_and_beats_rvq():
    rng = np.random.default_rng(0)
    lq = build_lloyd_inner(rng, 3, 4, 5000)
    h = np.asarray(lq.history)
    assert np.all(np.diff(h) <= 1e-12)
    assert lq.kind == "lloyd"
    test = complex_normal(np.random.default_rng(9), (4000, 3))
    test /= np.linalg.norm(test, axis=1, keepdims=True)
    rv = build_rvq(np.random.default_rng(2), 3, 4)
    d_l = 1 - _kernels.assign_chordal(test, lq.vectors)[1].mean()
    d_r = 1 - _kernels.assign_chordal(test, rv.vectors)[1].mean()
    assert d_l < d_r


def test_lloyd_training_size_enforced():
    with pytest.raises(ValueError, match="50"):
        build_lloyd_inner(np.random.default_rng(0), 4, 8, 1000)


def test_lloyd_repairs_empty_clusters():
    x = complex_normal(np.random.default_rng(0), (400, 2))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    init = np.vstack([x[:3], x[:1]])  # duplicate codeword gets an empty cluster
    c, hist = lloyd(x, init, 20)
    assert np.all(np.diff(hist) <= 1e-12)
    assert len({tuple(np.round(r, 9)) for r in c}) == 4


def test_restricted_assign_is_exact():
    rng = np.random.default_rng(4)
    c = complex_normal(rng, (1024, 4))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    x = complex_normal(rng, (20000, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    full, fb = _kernels.assign_chordal(x, c)
    # start from slightly stale labels, as in a Lloyd step
    stale = _kernels.assign_chordal(x, c + 0.05 * complex_normal(rng, c.shape))[0]
    lab, best = _assign(x, c, stale)
    np.testing.assert_array_equal(lab, full)
    np.testing.assert_allclose(best, fb, atol=1e-12)


def test_sqrt_psd():
    r = ensemble_correlation(ArrayGeometry.ula(16), 2)
    s = sqrt_psd(r)
    np.testing.assert_allclose(s @ s, r, atol=1e-10)
    with pytest.raises(ValueError, match="PSD"):
        sqrt_psd(-np.eye(3))


def test_rotated_from_steering_matches_full_rotation():
    rng, a, _, _ = _subspace_setup(7)
    base = build_rvq(rng, 64, 5).vectors
    fast = rotated_from_steering(a, base, 5)
    slow = build_rotated_statistics(a @ a.conj().T, 5, rng, base=base)
    # the full route takes square roots of ~1e-16 null-space eigenvalues
    np.testing.assert_allclose(fast.vectors, slow.vectors, atol=1e-6)
    assert np.allclose(np.linalg.norm(fast.vectors, axis=1), 1)


@pytest.mark.parametrize("binary", [True, False])
def test_save_load_roundtrip(tmp_path, binary):
    cb = build_rvq(np.random.default_rng(0), 5, 3)
    path = tmp_path / ("cb.bin" if binary else "cb.txt")
    save_codebook(path, cb, binary=binary)
    back = load_codebook(path)
    np.testing.assert_array_equal(back.vectors, cb.vectors)
    assert (back.bits, back.kind, back.dim) == (3.0, "rvq", 5)


def test_lloyd_fixed_point_on_orthogonal_set():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(complex_normal(rng, (4, 4)))
    train = q.T * np.exp(1j * rng.uniform(0, 2 * np.pi, 4))[:, None]
    init = train[[2, 0, 3, 1]] * 1j
    c, hist = lloyd(train, init, 10)
    assert hist[-1] < 1e-12
    overlap = np.abs(c.conj() @ train.T)
    np.testing.assert_allclose(np.sort(overlap.max(axis=0)), np.ones(4), atol=1e-12)


def test_subspace_prenormalization_norms_near_one():
    geom = ArrayGeometry.ula(128)
    rng = np.random.default_rng(0)
    ps = draw_path_set(rng, 4, geom)
    a = steering_matrix(geom, ps)
    w = build_rvq(rng, 4, 5).vectors
    norms = np.linalg.norm(w @ a.T, axis=1)
    assert np.all((0.97 <= norms) & (norms <= 1.03))
