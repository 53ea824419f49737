"""Path-direction acquisition: sample covariance, MUSIC, and AoD quantization.

Directions are handled in sin-space (``sin(az)`` for a ULA; the pair
``(cos(el) sin(az), sin(el))`` for a UPA), which is where the array
response is periodic and where the uniform quantizer operates.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ArrayGeometry, _phase_ramp, complex_normal, upa_steering_from_coordinates

SPECTRUM_FLOOR = 1e-12
DEFAULT_GRID_STEP = 1e-3
DEFAULT_SNAPSHOTS = 200


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    snapshot_count: int


@dataclass(frozen=True)
class AodEstimate:
    azimuths: np.ndarray
    elevations: np.ndarray
    grid_resolution: float
    quantized: bool = False
    bits_per_angle: int | None = None
    under_resolved: bool = False
    peak_values: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_paths(self) -> int:
        return len(self.azimuths)


def sample_covariance(snapshots) -> CovarianceEstimate:
    """``(1/N) sum h h^H`` over channel snapshots, Hermitian-symmetrized."""
    rows = [np.asarray(getattr(s, "entries", s), dtype=complex) for s in snapshots]
    if not rows:
        raise ValueError("need at least one snapshot")
    if len({r.shape for r in rows}) != 1:
        raise ValueError("snapshots differ in length")
    h = np.stack(rows, axis=1)
    r = h @ h.conj().T / h.shape[1]
    return CovarianceEstimate((r + r.conj().T) / 2, h.shape[1])


def noise_subspace(covariance, num_paths: int) -> np.ndarray:
    r = getattr(covariance, "matrix", covariance)
    m = r.shape[0]
    if num_paths >= m:
        raise ValueError(f"model order {num_paths} must be smaller than the array size {m}")
    lam, vecs = np.linalg.eigh(r)
    if np.ptp(lam) <= 1e-12 * max(1.0, float(np.max(np.abs(lam)))):
        raise ValueError("degenerate covariance: all eigenvalues equal, no signal subspace")
    return vecs[:, : m - num_paths]


def music_spectrum(covariance, num_paths: int, steering: np.ndarray) -> np.ndarray:
    """MUSIC pseudo-spectrum ``1 / (a^H N N^H a)`` for each column of ``steering``.

    ``steering`` holds the candidate array responses (one grid point per
    column); the denominator is floored at ``SPECTRUM_FLOOR``.
    """
    n = noise_subspace(covariance, num_paths)
    proj = n.conj().T @ steering
    den = np.sum(np.abs(proj) ** 2, axis=0)
    return 1.0 / np.maximum(den, SPECTRUM_FLOOR)


def sin_grid(step: float) -> np.ndarray:
    """Uniform grid on [-1, 1] in sin-space with spacing ``step``."""
    n = int(round(2.0 / step))
    return np.linspace(-1.0, 1.0, n + 1)


def grid_steering(geometry: ArrayGeometry, step: float):
    """Grid coordinates and their steering matrix.

    ULA: 1-D ``sin(az)`` grid. UPA: 2-D ``(u, v)`` grid restricted to the
    visible region ``u^2 + v^2 <= 1``; points outside get no column.
    """
    g = sin_grid(step)
    if geometry.kind == "ula":
        return g, _phase_ramp(geometry.m1, geometry.spacing_ratio, g)
    uu, vv = np.meshgrid(g, g, indexing="ij")
    return (uu, vv), upa_steering_from_coordinates(geometry, uu.ravel(), vv.ravel())


def _local_maxima_1d(s: np.ndarray, circular: bool = False) -> np.ndarray:
    if circular:
        left, right = np.roll(s, 1), np.roll(s, -1)
    else:
        left = np.r_[-np.inf, s[:-1]]
        right = np.r_[s[1:], -np.inf]
    return np.flatnonzero((s > left) & (s > right))


def _ula_wraps(geometry: ArrayGeometry) -> bool:
    # the response has period 1/(d/lambda) in sin-space; at half-wavelength
    # spacing that is the whole grid, so -1 and +1 are the same direction
    return abs(2.0 * geometry.spacing_ratio - 1.0) < 1e-12


def _local_maxima_2d(s: np.ndarray) -> np.ndarray:
    padded = np.pad(s, 1, constant_values=-np.inf)
    core = padded[1:-1, 1:-1]
    mask = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                mask &= core > padded[1 + di:padded.shape[0] - 1 + di, 1 + dj:padded.shape[1] - 1 + dj]
    return np.flatnonzero(mask)


def estimate_aods(covariance, num_paths: int, geometry: ArrayGeometry,
                  grid_resolution: float = DEFAULT_GRID_STEP,
                  separation_floor: float | None = None) -> AodEstimate:
    """Directions at the ``num_paths`` largest local maxima of the MUSIC spectrum.

    A local maximum is strictly larger than all of its grid neighbours. If
    fewer maxima exist the remainder is filled with the largest remaining
    grid values and the estimate is flagged ``under_resolved``; the flag is
    also raised when two estimates are closer than ``separation_floor``.
    """
    coords, steering = grid_steering(geometry, grid_resolution)
    if geometry.kind == "ula":
        wraps = _ula_wraps(geometry)
        if wraps:
            coords, steering = coords[:-1], steering[:, :-1]
        flat = music_spectrum(covariance, num_paths, steering)
        peaks = _local_maxima_1d(flat, circular=wraps)
    else:
        uu, vv = coords
        flat = np.full(uu.size, -np.inf)
        visible = (uu.ravel() ** 2 + vv.ravel() ** 2) <= 1.0 + 1e-12
        flat[visible] = music_spectrum(covariance, num_paths, steering[:, visible])
        peaks = _local_maxima_2d(flat.reshape(uu.shape))
    order = peaks[np.argsort(-flat[peaks], kind="stable")]
    chosen = list(order[:num_paths])
    under = len(chosen) < num_paths
    if under:
        taken = set(chosen)
        for i in np.argsort(-flat, kind="stable"):
            if len(chosen) == num_paths:
                break
            if i not in taken and np.isfinite(flat[i]):
                chosen.append(int(i))
                taken.add(int(i))
    chosen = np.asarray(chosen, dtype=int)
    if geometry.kind == "ula":
        s = coords[chosen]
        az, el = np.arcsin(np.clip(s, -1, 1)), np.zeros(len(chosen))
        coord_sets = [s]
    else:
        u, v = coords[0].ravel()[chosen], coords[1].ravel()[chosen]
        el = np.arcsin(np.clip(v, -1, 1))
        az = np.arcsin(np.clip(u / np.maximum(np.cos(el), 1e-300), -1, 1))
        coord_sets = [u, v]
    if separation_floor is not None and len(chosen) > 1:
        for c in coord_sets:
            gaps = np.abs(c[:, None] - c[None, :])[np.triu_indices(len(c), 1)]
            if np.min(gaps) < separation_floor:
                under = True
    return AodEstimate(az, el, grid_resolution, under_resolved=under, peak_values=flat[chosen])


def quantize_sin(values, bits: int) -> np.ndarray:
    """Mid-rise uniform quantizer with ``2^bits`` levels on [-1, 1]."""
    if bits < 1:
        raise ValueError("need at least one bit per angle")
    levels = 1 << int(bits)
    step = 2.0 / levels
    x = np.asarray(values, dtype=float)
    k = np.clip(np.floor((x + 1.0) / step), 0, levels - 1)
    return -1.0 + (k + 0.5) * step


def quantize_aods(estimate: AodEstimate, bits: int, elevation: bool | None = None) -> AodEstimate:
    """Quantize ``sin(az)`` (and ``sin(el)``) uniformly with ``bits`` bits each.

    The sin-space error is at most half a step, ``2^-bits``. Elevations are
    quantized when ``elevation`` is true; by default only when some are
    nonzero (ULA estimates carry all-zero elevations).
    """
    if elevation is None:
        elevation = bool(np.any(estimate.elevations))
    az = np.arcsin(quantize_sin(np.sin(estimate.azimuths), bits))
    el = np.arcsin(quantize_sin(np.sin(estimate.elevations), bits)) if elevation \
        else np.asarray(estimate.elevations, dtype=float)
    return replace(estimate, azimuths=az, elevations=el, quantized=True, bits_per_angle=int(bits))


def exact_estimate(path_set) -> AodEstimate:
    """Wrap true path directions as an (unquantized) estimate."""
    return AodEstimate(np.asarray(path_set.azimuths, float), np.asarray(path_set.elevations, float), 0.0)


def channel_snapshots(rng: np.random.Generator, steering: np.ndarray, count: int,
                      noise_var: float = 0.0) -> np.ndarray:
    """``count`` snapshots ``A g + n`` with fresh CN(0, 1) gains (columns)."""
    g = complex_normal(rng, (steering.shape[1], count))
    h = steering @ g
    if noise_var > 0:
        h = h + np.sqrt(noise_var) * complex_normal(rng, h.shape)
    return h
