"""Zero-forcing precoding and per-user rates under perfect, quantized and analog CSI.

Users get equal power ``gamma / U`` and unit-variance receiver noise. A
trial draws one coherence block: every user's paths, the true channel
matrix ``H`` (one column per user), the fed-back matrix, and the rates of
ZF built on each.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import aod as _aod
from .channel import (
    ArrayGeometry,
    complex_normal,
    draw_path_set,
    ensemble_correlation,
    steering_matrix,
    steering_matrix_from_angles,
)
from .codebook import (
    Codebook,
    build_rotated_statistics,
    build_rvq,
    build_subspace,
    codebook_size,
    codeword,
    quantize,
    rotated_from_steering,
)

COND_LIMIT = 1e12
CODEBOOK_KINDS = ("subspace_rvq", "subspace_lloyd", "rvq_full", "rotated_stats")


class RankDeficientError(ValueError):
    """The fed-back channel matrix is too ill-conditioned for ZF."""


@dataclass(frozen=True)
class RateSample:
    per_user_sinr: np.ndarray
    per_user_rate: np.ndarray

    @property
    def mean_rate(self) -> float:
        return float(np.mean(self.per_user_rate))


@dataclass(frozen=True)
class PrecodedLink:
    H: np.ndarray
    H_fb: np.ndarray
    V: np.ndarray
    gamma: float

    @property
    def U(self) -> int:
        return self.H.shape[1]

    def rates(self) -> RateSample:
        return evaluate_rates(self.H, self.V, self.gamma)


@dataclass(frozen=True)
class AnalogFeedbackOutcome:
    g_check: np.ndarray
    error_variance: float
    mu: float
    gamma_U: float
    observation: np.ndarray = field(repr=False, default=None)


def zf_precoder(h_fb: np.ndarray) -> np.ndarray:
    """Unit-norm columns of ``H (H^H H)^-1``."""
    h_fb = np.asarray(h_fb, dtype=complex)
    if h_fb.ndim == 1:
        h_fb = h_fb[:, None]
    m, u = h_fb.shape
    if u > m:
        raise ValueError(f"{u} users exceed {m} antennas")
    cond = np.linalg.cond(h_fb)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RankDeficientError(f"fed-back channel matrix condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    gram = h_fb.conj().T @ h_fb
    v = h_fb @ np.linalg.inv(gram)
    return v / np.linalg.norm(v, axis=0, keepdims=True)


def evaluate_rates(h: np.ndarray, v: np.ndarray, gamma: float) -> RateSample:
    """Per-user SINR and ``log2(1 + SINR)`` of precoder ``v`` on true channels ``h``."""
    h = np.asarray(h, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if h.ndim == 1:
        h, v = h[:, None], v.reshape(-1, 1)
    if h.shape != v.shape:
        raise ValueError(f"channel {h.shape} and precoder {v.shape} shapes differ")
    u = h.shape[1]
    gains = np.abs(h.conj().T @ v) ** 2  # [user, beam]
    sig = np.diag(gains).copy()
    interf = gains.sum(axis=1) - sig
    p = gamma / u
    sinr = p * sig / (1.0 + p * interf)
    return RateSample(sinr, np.log2(1.0 + sinr))


def analog_feedback(g, mu: float, gamma_u: float, rng: np.random.Generator) -> AnalogFeedbackOutcome:
    """Uncoded transmission of the path gains and their MMSE estimate.

    ``z = sqrt(mu gamma_U) g + n`` and ``g_check = sqrt(mu gamma_U)/(1 + mu gamma_U) z``.
    """
    if not (mu > 0 and gamma_u > 0):
        raise ValueError("analog feedback needs mu > 0 and gamma_U > 0")
    g = np.asarray(g, dtype=complex)
    snr = mu * gamma_u
    z = math.sqrt(snr) * g + complex_normal(rng, g.shape)
    return AnalogFeedbackOutcome(math.sqrt(snr) / (1.0 + snr) * z, 1.0 / (1.0 + snr), mu, gamma_u, z)


@dataclass(frozen=True)
class LinkConfig:
    """One link-level operating point.

    ``aod_bits=None`` leaves the AoDs unquantized; ``aod_mode`` is
    ``"exact"`` (true directions) or ``"music"`` (estimated from
    ``snapshots`` channel samples on a ``grid_step`` grid). ``correlation``
    picks the statistics the rotated baseline uses: the ``"ensemble"``
    average over the direction prior, or each user's ``"instantaneous"``
    ``A A^H``.
    """

    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    users: int = 4
    paths: int = 4
    gamma: float = 1.0
    bits: float = 6.0
    codebook: str = "subspace_rvq"
    aod_mode: str = "exact"
    aod_bits: int | None = None
    snapshots: int = _aod.DEFAULT_SNAPSHOTS
    grid_step: float = _aod.DEFAULT_GRID_STEP
    separation_floor: float | None = None
    shared_cluster: bool = False
    correlation: str = "ensemble"
    mu: float = 0.5
    gamma_u: float = 5.0

    def __post_init__(self):
        if self.codebook not in CODEBOOK_KINDS:
            raise ValueError(f"unknown codebook {self.codebook!r}")
        if self.aod_mode not in ("exact", "music"):
            raise ValueError(f"unknown aod_mode {self.aod_mode!r}")
        if self.correlation not in ("ensemble", "instantaneous"):
            raise ValueError(f"unknown correlation {self.correlation!r}")


@dataclass
class UserDraw:
    """Per-trial state shared by every scheme evaluated on the same block."""

    path_sets: list
    steering: list
    H: np.ndarray
    rng_aod: np.random.Generator | None = None
    _aod_cache: dict = field(default_factory=dict, repr=False)

    @property
    def users(self) -> int:
        return self.H.shape[1]


def draw_users(rng: np.random.Generator, config: LinkConfig) -> UserDraw:
    """Paths and gains for every user; in the shared-cluster case all users
    reuse the first user's directions with independent gains."""
    sets = []
    for i in range(config.users):
        ps = draw_path_set(rng, config.paths, config.geometry, config.separation_floor)
        if config.shared_cluster and sets:
            ps = sets[0].with_gains(ps.gains)
        sets.append(ps)
    steer = [steering_matrix(config.geometry, ps) for ps in sets]
    h = np.stack([a @ ps.gains for a, ps in zip(steer, sets)], axis=1)
    return UserDraw(sets, steer, h)


def estimated_steering(draw: UserDraw, user: int, config: LinkConfig, rng=None) -> np.ndarray:
    """Steering matrix the codebook is built on: true, quantized and/or MUSIC-estimated."""
    if config.aod_mode == "exact" and config.aod_bits is None:
        return draw.steering[user]
    key = (user, config.aod_mode, config.aod_bits, config.snapshots, config.grid_step)
    if key in draw._aod_cache:
        return draw._aod_cache[key]
    ps = draw.path_sets[user]
    if config.aod_mode == "music":
        est = draw._aod_cache.get(("music", user, config.snapshots, config.grid_step))
        if est is None:
            r = rng if rng is not None else draw.rng_aod
            if r is None:
                raise ValueError("MUSIC acquisition needs a generator")
            snaps = _aod.channel_snapshots(r, draw.steering[user], config.snapshots)
            cov = _aod.sample_covariance(snaps.T)
            est = _aod.estimate_aods(cov, config.paths, config.geometry, config.grid_step)
            draw._aod_cache[("music", user, config.snapshots, config.grid_step)] = est
    else:
        est = _aod.exact_estimate(ps)
    if config.aod_bits is not None:
        est = _aod.quantize_aods(est, config.aod_bits, elevation=config.geometry.kind == "upa")
    a = steering_matrix_from_angles(config.geometry, est.azimuths, est.elevations)
    draw._aod_cache[key] = a
    return a


def quantized_channel(draw: UserDraw, config: LinkConfig, inner: Codebook | None = None,
                      full: Codebook | None = None, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Fed-back matrix ``||h_u|| c_u`` and per-user chordal errors.

    ``inner`` is the ``P``-dimensional codebook for the subspace kinds and
    ``full`` the ``M``-dimensional one for ``rvq_full`` (or the unrotated
    base rows for ``rotated_stats``). Missing codebooks are drawn from
    ``rng`` (sizes follow ``config.bits``).
    """
    n = codebook_size(config.bits)
    m = config.geometry.num_antennas
    cols, errs = [], []
    if config.codebook in ("subspace_rvq", "subspace_lloyd"):
        if inner is None:
            if config.codebook == "subspace_lloyd":
                raise ValueError("subspace_lloyd needs a trained inner codebook")
            inner = build_rvq(rng, config.paths, config.bits)
        if inner.size > n:
            inner = inner.prefix(n)
    elif full is None:
        full = build_rvq(rng, m, config.bits)
    elif full.size > n:
        full = full.prefix(n)
    for u in range(draw.users):
        h = draw.H[:, u]
        if config.codebook in ("subspace_rvq", "subspace_lloyd"):
            cb = build_subspace(estimated_steering(draw, u, config, rng), inner)
        elif config.codebook == "rvq_full":
            cb = full
        elif config.correlation == "instantaneous":
            cb = rotated_from_steering(draw.steering[u], full.vectors, config.bits)
        else:
            cb = full  # caller passes the ensemble-rotated codebook itself
        q = quantize(h, cb)
        cols.append(q.magnitude * codeword(cb, q.index))
        errs.append(q.chordal_error)
    return np.stack(cols, axis=1), np.asarray(errs)


def ideal_rates(draw: UserDraw, gamma: float) -> RateSample:
    return evaluate_rates(draw.H, zf_precoder(draw.H), gamma)


def run_quantized_trial(config: LinkConfig, rng: np.random.Generator, inner: Codebook | None = None,
                        full: Codebook | None = None) -> tuple[RateSample, RateSample]:
    """One block: ``(ideal, quantized)`` rate samples.

    Without explicit codebooks a fresh one is drawn from ``rng`` after the
    channels (for ``rotated_stats`` with ensemble statistics the rotation
    is computed here, which is slow for large ``M``; the harness caches it).
    """
    draw = draw_users(rng, config)
    draw.rng_aod = rng
    if config.codebook == "rotated_stats" and full is None:
        if config.correlation == "ensemble":
            full = build_rotated_statistics(ensemble_correlation(config.geometry, config.paths),
                                            config.bits, rng)
        else:
            full = build_rvq(rng, config.geometry.num_antennas, config.bits)
    ideal = ideal_rates(draw, config.gamma)
    h_fb, _ = quantized_channel(draw, config, inner, full, rng)
    return ideal, evaluate_rates(draw.H, zf_precoder(h_fb), config.gamma)


def analog_channel(draw: UserDraw, mu: float, gamma_u: float, rng: np.random.Generator):
    """``h_check_u = A_u g_check_u`` for every user, with the gain errors."""
    cols, errs = [], []
    for a, ps in zip(draw.steering, draw.path_sets):
        out = analog_feedback(ps.gains, mu, gamma_u, rng)
        cols.append(a @ out.g_check)
        errs.append(ps.gains - out.g_check)
    return np.stack(cols, axis=1), errs


def check_analog_interference(draw: UserDraw, v: np.ndarray, errors, tol: float = 1e-8) -> float:
    """Largest gap between ``|h_u^H v_i|^2`` and ``|e_u^H A_u^H v_i|^2`` over ``i != u``.

    They agree because ZF on the fed-back matrix nulls ``h_check_u^H v_i``.
    Raises ``AssertionError`` past ``tol`` (scaled by the channel power).
    """
    worst = 0.0
    u = draw.users
    direct = np.abs(draw.H.conj().T @ v) ** 2
    for k in range(u):
        proj = np.abs(errors[k].conj() @ (draw.steering[k].conj().T @ v)) ** 2
        off = np.arange(u) != k
        dev = float(np.max(np.abs(direct[k, off] - proj[off]))) if u > 1 else 0.0
        scale = max(1.0, float(np.linalg.norm(draw.H[:, k]) ** 2))
        if dev > tol * scale:
            raise AssertionError(f"analog interference forms differ by {dev:.3g} for user {k}")
        worst = max(worst, dev)
    return worst


def run_analog_trial(config: LinkConfig, rng: np.random.Generator) -> tuple[RateSample, RateSample]:
    """One block: ``(ideal, analog)`` rate samples; AoDs are known at the BS."""
    draw = draw_users(rng, config)
    ideal = ideal_rates(draw, config.gamma)
    h_check, errs = analog_channel(draw, config.mu, config.gamma_u, rng)
    v = zf_precoder(h_check)
    check_analog_interference(draw, v, errs)
    return ideal, evaluate_rates(draw.H, v, config.gamma)
