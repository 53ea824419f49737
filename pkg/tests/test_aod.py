import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aodfeedback.aod import (
    AodEstimate, channel_snapshots, estimate_aods, exact_estimate, music_spectrum, noise_subspace,
    quantize_aods, quantize_sin, sample_covariance, sin_grid,
)
from aodfeedback.channel import ArrayGeometry, draw_path_set, steering_matrix, steering_matrix_from_angles
from helpers import matched_sin_error


def _cov(geom, az, el=None, n=200, seed=0, noise=0.0):
    a = steering_matrix_from_angles(geom, az, el)
    return sample_covariance(channel_snapshots(np.random.default_rng(seed), a, n, noise).T)


def test_sample_covariance_hermitian_and_count():
    cov = _cov(ArrayGeometry.ula(16), [0.1, 0.5])
    np.testing.assert_allclose(cov.matrix, cov.matrix.conj().T)
    assert cov.snapshot_count == 200
    with pytest.raises(ValueError):
        sample_covariance([])
    with pytest.raises(ValueError):
        sample_covariance([np.ones(3), np.ones(4)])


def test_noise_subspace_errors():
    with pytest.raises(ValueError, match="model order"):
        noise_subspace(np.eye(4), 4)
    with pytest.raises(ValueError, match="degenerate"):
        noise_subspace(np.eye(4), 2)


def test_music_spectrum_peaks_at_truth():
    geom = ArrayGeometry.ula(32)
    s_true = np.array([-0.4, 0.2])
    cov = _cov(geom, np.arcsin(s_true))
    probe = steering_matrix_from_angles(geom, np.arcsin(np.r_[s_true, 0.7]))
    spec = music_spectrum(cov, 2, probe)
    assert spec[0] > 1e6 * spec[2] and spec[1] > 1e6 * spec[2]


def test_grid_contains_endpoints():
    g = sin_grid(1e-3)
    assert g[0] == -1 and g[-1] == 1 and g.size == 2001


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 10**6))
def test_music_recovers_within_grid(seed):
    geom = ArrayGeometry.ula(64)
    rng = np.random.default_rng(seed)
    ps = draw_path_set(rng, 3, geom)
    cov = sample_covariance(channel_snapshots(rng, steering_matrix(geom, ps), 100).T)
    est = estimate_aods(cov, 3, geom, 1e-3)
    assert np.all(matched_sin_error(est.azimuths, ps.azimuths) <= 2e-3) and not est.under_resolved


def test_music_upa():
    geom = ArrayGeometry.upa(64)
    az, el = np.array([0.3, -0.6]), np.array([0.2, -0.4])
    est = estimate_aods(_cov(geom, az, el), 2, geom, 1e-2)
    got = sorted(zip(np.cos(est.elevations) * np.sin(est.azimuths), np.sin(est.elevations)))
    want = sorted(zip(np.cos(el) * np.sin(az), np.sin(el)))
    assert np.max(np.abs(np.array(got) - np.array(want))) <= 2e-2


def test_under_resolved_flag_below_separation_floor():
    geom = ArrayGeometry.ula(16)
    est = estimate_aods(_cov(geom, np.arcsin([0.1, 0.3])), 2, geom, 1e-3, separation_floor=0.5)
    assert est.under_resolved and est.num_paths == 2
    assert not estimate_aods(_cov(geom, np.arcsin([0.1, 0.3])), 2, geom, 1e-3).under_resolved


def test_under_resolved_when_too_few_peaks():
    geom = ArrayGeometry.ula(16)
    est = estimate_aods(_cov(geom, [0.3]), 3, geom, 1e-2)
    assert est.num_paths == 3


def test_endfire_path_is_found_once():
    # at half-wavelength spacing sin = -1 and sin = +1 are the same direction
    geom = ArrayGeometry.ula(64)
    s_true = np.array([-0.99997, -0.72, 0.52])
    est = estimate_aods(_cov(geom, np.arcsin(s_true), n=100), 3, geom, 1e-3)
    assert np.max(matched_sin_error(est.azimuths, np.arcsin(s_true))) <= 2e-3
    w = estimate_aods(_cov(geom, np.arcsin([0.99995, 0.1]), n=100), 2, geom, 1e-3)
    assert np.max(matched_sin_error(w.azimuths, np.arcsin([0.99995, 0.1]))) <= 2e-3


@given(x=st.floats(-1, 1), bits=st.integers(1, 14))
def test_quantize_sin_error_and_levels(x, bits):
    q = float(quantize_sin(x, bits))
    assert abs(q - x) <= 2.0 ** -bits + 1e-15
    k = (q + 1) / (2.0 / (1 << bits)) - 0.5
    assert abs(k - round(k)) < 1e-9 and 0 <= round(k) < (1 << bits)


def test_quantize_sin_rejects_zero_bits():
    with pytest.raises(ValueError):
        quantize_sin(0.1, 0)


def test_quantize_aods_elevation_rule():
    e = AodEstimate(np.array([0.3]), np.array([0.0]), 0.0)
    q = quantize_aods(e, 4)
    assert q.quantized and q.bits_per_angle == 4 and q.elevations[0] == 0.0
    e2 = AodEstimate(np.array([0.3]), np.array([0.2]), 0.0)
    assert quantize_aods(e2, 4).elevations[0] != 0.2
    assert quantize_aods(e2, 4, elevation=False).elevations[0] == 0.2


def test_exact_estimate_roundtrip():
    ps = draw_path_set(np.random.default_rng(0), 3, ArrayGeometry.ula(32))
    est = exact_estimate(ps)
    np.testing.assert_array_equal(est.azimuths, ps.azimuths)
    assert not est.quantized
