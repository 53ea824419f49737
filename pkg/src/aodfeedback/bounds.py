"""Closed-form rate-gap and feedback-bit bounds, with numerical oracles.

SNR arguments named ``snr_db`` are receiver SNRs in dB,
``10 log10((gamma/U) E||h||^2)``; every other power is linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import complex_normal

_SING_TOL = 1e-9


def _check_paths(num_paths):
    if num_paths < 2:
        raise ValueError("P must be at least 2 here")


def upsilon(x, m: int):
    """Dirichlet kernel ``sin(M pi x) / (M sin(pi x))``.

    At integer ``x`` the removable singularity is filled by its limit
    ``(-1)^(x (M-1))``. Accepts scalars or arrays.
    """
    if m < 1:
        raise ValueError("M must be >= 1")
    xa = np.asarray(x, dtype=float)
    den = m * np.sin(np.pi * xa)
    sing = np.abs(np.sin(np.pi * xa)) < _SING_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sing, 0.0, np.sin(m * np.pi * xa) / np.where(sing, 1.0, den))
    if np.any(sing):
        k = np.rint(xa)
        limit = np.where(np.mod(k * (m - 1), 2) == 0, 1.0, -1.0)
        out = np.where(sing, limit, out)
    return float(out) if np.ndim(out) == 0 else out


def phase_sum(x, m: int):
    """Signed brute-force ``(1/M) sum_m exp(j 2 pi m x)`` with the linear phase removed."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    n = np.arange(m)[:, None]
    s = np.exp(2j * np.pi * n * xa[None, :]).sum(axis=0) / m
    out = (s * np.exp(-1j * np.pi * (m - 1) * xa)).real
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class KSquaredBound:
    value: float
    beta: float
    valid: bool


def _k_factor(m, spacing_ratio, r, b0):
    return 1.0 - (m * m / 3.0) * (math.pi * spacing_ratio) ** 2 * r * r * 2.0 ** (-2 * b0)


def k_squared_bound(m: int, spacing_ratio: float = 0.5, r: float = 2.0, b0: float = 8,
                    m2: int | None = None) -> KSquaredBound:
    """Lower bound on ``|K|^2`` after AoD quantization with ``b0`` bits.

    ``1 - (M^2/3)(pi d/lambda)^2 r^2 2^(-2 B0)``, clamped to [0, 1]; with
    ``m2`` given, the UPA product of the horizontal (``m``) and vertical
    (``m2``) factors. ``beta = 1 - value``. ``valid`` reports whether the
    quadratic expansion lower-bounds the exact ``|Upsilon|^2`` on the whole
    range ``|delta| <= r 2^(-B0)`` (it fails for coarse quantization).
    """
    if m < 1 or spacing_ratio <= 0 or r <= 0 or b0 < 0:
        raise ValueError("k_squared_bound needs positive arguments")
    factors = [m] if m2 is None else [m, m2]
    value, valid = 1.0, True
    for mi in factors:
        f = min(1.0, max(0.0, _k_factor(mi, spacing_ratio, r, b0)))
        value *= f
        valid = valid and _exact_dominates(mi, spacing_ratio, r, b0)
    return KSquaredBound(value, 1.0 - value, valid)


def _exact_dominates(m, spacing_ratio, r, b0, grid=2001):
    delta = np.linspace(-r * 2.0 ** (-b0), r * 2.0 ** (-b0), grid)
    exact = np.asarray(upsilon(spacing_ratio * delta, m)) ** 2
    taylor = 1.0 - (m * m / 3.0) * (math.pi * spacing_ratio * delta) ** 2
    return bool(np.all(np.clip(taylor, 0.0, 1.0) <= exact + 1e-12))


def quantization_error_bound(bits: float, num_paths: int, beta: float = 0.0) -> float:
    """``(1 - beta) 2^(-B/(P-1)) + beta``."""
    _check_paths(num_paths)
    if bits < 0 or not 0.0 <= beta <= 1.0:
        raise ValueError("need B >= 0 and beta in [0, 1]")
    t = 2.0 ** (-bits / (num_paths - 1))
    return beta * (1.0 - t) + t


def default_alpha(num_paths: int) -> float:
    _check_paths(num_paths)
    return 1.0 / (num_paths - 1)


def required_feedback_bits(num_paths: int, snr_db: float, users: int,
                           alpha: float | None = None, b: float = 2.0 ** 0.13) -> float:
    """Feedback bits for a rate gap of at most ``log2(b)``.

    ``(P-1)/3 * SNR_dB + (P-1) log2((U-1) alpha / (b-1))``; real-valued,
    the caller rounds up.
    """
    _check_paths(num_paths)
    if b <= 1:
        raise ValueError("b must exceed 1")
    if alpha is None:
        alpha = default_alpha(num_paths)
    return (num_paths - 1) / 3.0 * snr_db + (num_paths - 1) * math.log2((users - 1) * alpha / (b - 1))


def gamma_from_snr_db(snr_db: float, users: int, mean_channel_power: float) -> float:
    """Transmit power ``gamma`` giving receiver SNR ``snr_db`` for ``E||h||^2``."""
    return users * 10.0 ** (snr_db / 10.0) / mean_channel_power


def rate_gap_quantized_bound(users: int, gamma: float, mean_channel_power: float,
                             alpha: float | None, bits: float, num_paths: int,
                             beta: float = 0.0) -> float:
    """``log2(1 + (U-1)(gamma/U) E||h||^2 alpha (2^(-B/(P-1)) + beta (1 - 2^(-B/(P-1)))))``."""
    _check_paths(num_paths)
    if alpha is None:
        alpha = default_alpha(num_paths)
    q = quantization_error_bound(bits, num_paths, beta)
    return math.log2(1.0 + (users - 1) * gamma / users * mean_channel_power * alpha * q)


def rate_gap_analog_bound(users: int, gamma: float, mu: float, gamma_u: float) -> float:
    """``log2(1 + (U-1)(gamma/U) / (1 + mu gamma_U))``."""
    if users < 1 or gamma < 0 or mu < 0 or gamma_u < 0:
        raise ValueError("rate_gap_analog_bound needs non-negative inputs")
    return math.log2(1.0 + (users - 1) * (gamma / users) / (1.0 + mu * gamma_u))


def rate_gap_quantized_budget_bound(gamma: float, num_paths: int, mu: float, gamma_u: float) -> float:
    """Quantized gap bound with the analog budget ``B = mu P log2(1 + gamma_U)`` bits.

    ``log2(1 + gamma P/(P-1) (1 + gamma_U)^(-mu P/(P-1)))``.
    """
    _check_paths(num_paths)
    p = num_paths
    return math.log2(1.0 + gamma * p / (p - 1) * (1.0 + gamma_u) ** (-mu * p / (p - 1)))


def budget_bits(mu: float, num_paths: int, gamma_u: float) -> float:
    """Feedback bits carried by ``mu P`` uplink uses at SNR ``gamma_U``."""
    return mu * num_paths * math.log2(1.0 + gamma_u)


def crossover_mu(gamma: float, users: int, num_paths: int, gamma_u: float,
                 lo: float = 1e-6, hi: float = 64.0) -> float | None:
    """Smallest ``mu`` beyond which the quantized budget bound is below the analog bound.

    Returns ``None`` if the two bounds do not cross on ``[lo, hi]``.
    """
    def diff(mu):
        return rate_gap_quantized_budget_bound(gamma, num_paths, mu, gamma_u) - \
            rate_gap_analog_bound(users, gamma, mu, gamma_u)

    grid = np.geomspace(lo, hi, 400)
    vals = np.array([diff(m) for m in grid])
    neg = np.flatnonzero(vals < 0)
    if neg.size == 0:
        return None
    i = int(neg[0])
    if i == 0:
        return float(lo)
    a, b = grid[i - 1], grid[i]
    for _ in range(80):
        mid = 0.5 * (a + b)
        if diff(mid) < 0:
            b = mid
        else:
            a = mid
    return float(b)


def lemma4_oracle(num_paths: int, trials: int, rng: np.random.Generator) -> float:
    """Sample mean of ``|t^H u|^2`` for isotropic unit ``t, u`` orthogonal to a random ``w``.

    The expectation is ``1/(P-1)``.
    """
    _check_paths(num_paths)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = num_paths
    w = complex_normal(rng, (trials, p))
    w /= np.linalg.norm(w, axis=1, keepdims=True)

    def in_null(x):
        x = x - w * np.sum(w.conj() * x, axis=1, keepdims=True)
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    t = in_null(complex_normal(rng, (trials, p)))
    u = in_null(complex_normal(rng, (trials, p)))
    return float(np.mean(np.abs(np.sum(t.conj() * u, axis=1)) ** 2))
