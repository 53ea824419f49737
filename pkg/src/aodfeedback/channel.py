"""Ray-based multi-user channels for ULA and UPA base-station arrays.

A user's downlink channel is a sum of ``P`` resolvable paths,
``h = A g``, where ``A`` stacks the unit-norm array responses of the path
directions and ``g`` holds i.i.d. CN(0, 1) path gains.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0, roots_legendre

MAX_REJECTION_ROUNDS = 10_000


@dataclass(frozen=True)
class ArrayGeometry:
    """Base-station antenna layout.

    ``m1`` is the number of horizontal elements (``M`` for a ULA) and ``m2``
    the number of vertical elements (always 1 for a ULA).
    """

    kind: str = "ula"
    m1: int = 128
    m2: int = 1
    spacing_ratio: float = 0.5

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in ("ula", "upa"):
            raise ValueError(f"unknown array kind {self.kind!r}")
        if int(self.m1) < 1 or int(self.m2) < 1:
            raise ValueError("array needs at least one antenna (m1, m2 >= 1)")
        if kind == "ula" and self.m2 != 1:
            raise ValueError("a ULA has m2 == 1")
        if not (self.spacing_ratio > 0 and math.isfinite(self.spacing_ratio)):
            raise ValueError("spacing_ratio must be positive and finite")

    @property
    def num_antennas(self) -> int:
        return self.m1 * self.m2

    @classmethod
    def ula(cls, m: int, spacing_ratio: float = 0.5) -> "ArrayGeometry":
        return cls("ula", m, 1, spacing_ratio)

    @classmethod
    def upa(cls, m: int, spacing_ratio: float = 0.5) -> "ArrayGeometry":
        """Square UPA when ``m`` is a perfect square, else a single row."""
        side = math.isqrt(m)
        if side * side == m:
            return cls("upa", side, side, spacing_ratio)
        return cls("upa", m, 1, spacing_ratio)

    def default_separation(self) -> float:
        """Default pairwise direction gap: four times the first-null offset 1/(M d/lambda)."""
        return 4.0 / (self.num_antennas * self.spacing_ratio)


@dataclass(frozen=True)
class PathSet:
    """Azimuths, elevations (radians) and complex gains of one user's paths."""

    azimuths: np.ndarray
    elevations: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        az = np.atleast_1d(np.asarray(self.azimuths, dtype=float))
        el = np.atleast_1d(np.asarray(self.elevations, dtype=float))
        g = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        if not (az.shape == el.shape == g.shape) or az.ndim != 1 or az.size < 1:
            raise ValueError("azimuths, elevations and gains need the same length P >= 1")
        half_pi = np.pi / 2 + 1e-12
        if np.any(np.abs(az) > half_pi) or np.any(np.abs(el) > half_pi):
            raise ValueError("path angles must lie in [-pi/2, pi/2]")
        for name, arr in (("azimuths", az), ("elevations", el), ("gains", g)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_paths(self) -> int:
        return self.azimuths.size

    def with_gains(self, gains) -> "PathSet":
        return PathSet(self.azimuths, self.elevations, gains)


@dataclass(frozen=True)
class ChannelVector:
    entries: np.ndarray
    source: PathSet | None = field(default=None, repr=False)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.entries))


def _phase_ramp(n: int, spacing_ratio: float, coord):
    """Columns ``exp(j 2 pi (d/lambda) m coord) / sqrt(n)`` for m = 0..n-1."""
    m = np.arange(n)[:, None]
    coord = np.atleast_1d(np.asarray(coord, dtype=float))[None, :]
    return np.exp(2j * np.pi * spacing_ratio * m * coord) / np.sqrt(n)


def direction_coordinates(geometry: ArrayGeometry, azimuths, elevations=None):
    """Phase coordinates of each direction.

    ULA: ``sin(az)``. UPA: ``(cos(el) sin(az), sin(el))`` as two arrays.
    """
    az = np.asarray(azimuths, dtype=float)
    if geometry.kind == "ula":
        return np.sin(az)
    el = np.zeros_like(az) if elevations is None else np.asarray(elevations, dtype=float)
    return np.cos(el) * np.sin(az), np.sin(el)


def steering_vector(geometry: ArrayGeometry, azimuth: float, elevation: float = 0.0) -> np.ndarray:
    """Unit-norm array response toward ``(azimuth, elevation)``.

    For a UPA the response is ``a_h kron a_v``, with the horizontal factor
    driven by ``cos(el) sin(az)`` and the vertical one by ``sin(el)``.
    Elevation is ignored for a ULA.
    """
    if not (math.isfinite(azimuth) and math.isfinite(elevation)):
        raise ValueError("steering angles must be finite")
    return steering_matrix_from_angles(geometry, [azimuth], [elevation])[:, 0]


def steering_matrix_from_angles(geometry: ArrayGeometry, azimuths, elevations=None) -> np.ndarray:
    az = np.atleast_1d(np.asarray(azimuths, dtype=float))
    el = np.zeros_like(az) if elevations is None else np.atleast_1d(np.asarray(elevations, dtype=float))
    if not (np.all(np.isfinite(az)) and np.all(np.isfinite(el))):
        raise ValueError("steering angles must be finite")
    d = geometry.spacing_ratio
    if geometry.kind == "ula":
        return _phase_ramp(geometry.m1, d, np.sin(az))
    return upa_steering_from_coordinates(geometry, np.cos(el) * np.sin(az), np.sin(el))


def upa_steering_from_coordinates(geometry: ArrayGeometry, u, v) -> np.ndarray:
    """UPA responses from horizontal/vertical direction coordinates ``u, v``."""
    h = _phase_ramp(geometry.m1, geometry.spacing_ratio, u)
    w = _phase_ramp(geometry.m2, geometry.spacing_ratio, v)
    # column-wise Kronecker product
    return (h[:, None, :] * w[None, :, :]).reshape(geometry.m1 * geometry.m2, -1)


def steering_matrix(geometry: ArrayGeometry, path_set: PathSet) -> np.ndarray:
    """``M x P`` matrix whose columns are the path steering vectors."""
    return steering_matrix_from_angles(geometry, path_set.azimuths, path_set.elevations)


def synthesize_channel(steering: np.ndarray, gains, source: PathSet | None = None) -> ChannelVector:
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if steering.shape[1] != gains.shape[0]:
        raise ValueError(
            f"steering matrix has {steering.shape[1]} columns but {gains.shape[0]} gains were given"
        )
    return ChannelVector(steering @ gains, source)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1): unit total variance, 1/2 per real/imaginary part.

    Drawn as one real array of shape ``shape + (2,)`` so that a leading
    slice of a larger draw equals a smaller draw from the same state.
    """
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    x = rng.standard_normal(shape + (2,))
    return (x[..., 0] + 1j * x[..., 1]) / np.sqrt(2.0)


def _min_gap(coords: np.ndarray) -> float:
    if coords.size < 2:
        return np.inf
    return float(np.min(np.diff(np.sort(coords))))


def draw_path_set(
    rng: np.random.Generator,
    num_paths: int,
    geometry: ArrayGeometry,
    separation_floor: float | None = None,
) -> PathSet:
    """Draw path directions uniform on [-pi/2, pi/2] and CN(0, 1) gains.

    Directions are redrawn until every pair of paths differs by at least
    ``separation_floor`` in each direction coordinate (``sin(az)`` for a
    ULA; both UPA coordinates).
    """
    if num_paths < 1:
        raise ValueError("need at least one path")
    floor = geometry.default_separation() if separation_floor is None else float(separation_floor)
    if floor < 0:
        raise ValueError("separation_floor must be non-negative")
    if num_paths > 1 and (num_paths - 1) * floor >= 2.0:
        raise ValueError(
            f"separation floor {floor:g} is infeasible for {num_paths} paths "
            "on the direction range [-1, 1]"
        )
    upa = geometry.kind == "upa"
    for _ in range(MAX_REJECTION_ROUNDS):
        az = rng.uniform(-np.pi / 2, np.pi / 2, num_paths)
        el = rng.uniform(-np.pi / 2, np.pi / 2, num_paths) if upa else np.zeros(num_paths)
        if num_paths == 1 or floor == 0:
            break
        coords = direction_coordinates(geometry, az, el)
        if upa:
            ok = _min_gap(coords[0]) >= floor and _min_gap(coords[1]) >= floor
        else:
            ok = _min_gap(coords) >= floor
        if ok:
            break
    else:
        raise RuntimeError(
            f"no path set with separation floor {floor:g} after "
            f"{MAX_REJECTION_ROUNDS} rejection rounds (P={num_paths})"
        )
    gains = complex_normal(rng, num_paths)
    return PathSet(az, el, gains)


def ensemble_correlation(geometry: ArrayGeometry, num_paths: int, quad_nodes: int = 256) -> np.ndarray:
    """Long-term correlation ``E[h h^H]`` averaged over the direction prior.

    Paths have unit-power gains and directions uniform on [-pi/2, pi/2], so
    ``E[h h^H] = P E[a a^H]``. For a ULA the Toeplitz entries reduce to
    ``J0(2 pi (d/lambda) (m - n)) / M``; UPA entries integrate the
    elevation numerically.
    """
    d = geometry.spacing_ratio
    m = geometry.num_antennas
    if geometry.kind == "ula":
        k = np.arange(m)
        lag = k[:, None] - k[None, :]
        return num_paths * j0(2 * np.pi * d * lag).astype(complex) / m
    x, w = roots_legendre(quad_nodes)
    theta = x * np.pi / 2
    w = w / 2  # uniform density on [-pi/2, pi/2] in the node variable
    i1 = np.arange(geometry.m1)
    i2 = np.arange(geometry.m2)
    l1 = (i1[:, None] - i1[None, :])[:, :, None]
    l2 = (i2[:, None] - i2[None, :])[:, :, None]
    # E over azimuth of exp(j 2 pi d l1 cos(el) sin(az)) is J0(2 pi d l1 cos(el))
    h = j0(2 * np.pi * d * l1 * np.cos(theta))
    v = np.exp(2j * np.pi * d * l2 * np.sin(theta))
    r = np.einsum("abt,cdt,t->acbd", h, v, w).reshape(m, m)
    return num_paths * r / m
