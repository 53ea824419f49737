"""Quick property suites behind ``aodfeedback verify``.

Each check returns ``(name, passed, detail)`` where ``detail`` states the
measured value against its limit.
"""
from __future__ import annotations

import numpy as np

from . import bounds
from .channel import ArrayGeometry, draw_path_set, steering_matrix, steering_matrix_from_angles
from .codebook import build_lloyd_inner, build_rvq, build_subspace, quantize
from .linkrate import LinkConfig, draw_users, zf_precoder


def _check(name, value, limit, ok):
    return name, bool(ok), f"measured {value:.6g}, limit {limit:.6g}"


def bounds_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    out = []
    v = bounds.lemma4_oracle(4, 100_000, rng)
    out.append(_check("null-space overlap P=4 within 2% of 1/3", abs(v - 1 / 3) / (1 / 3), 0.02, abs(v - 1 / 3) <= 0.02 / 3))
    v = bounds.lemma4_oracle(2, 1000, rng)
    out.append(_check("null-space overlap P=2 equals 1", abs(v - 1), 1e-12, abs(v - 1) <= 1e-12))
    xs = np.linspace(-0.49, 0.49, 997)
    err = float(np.max(np.abs(bounds.upsilon(xs, 128) - bounds.phase_sum(xs, 128))))
    out.append(_check("upsilon matches phase sum", err, 1e-10, err <= 1e-10))
    worst = -np.inf
    for m in (8, 32, 128, 256):
        for b0 in range(6, 13):
            k = bounds.k_squared_bound(m, 0.5, 2.0, b0)
            worst = max(worst, 0.0 if k.valid else 1.0)
    out.append(_check("Taylor bound below exact |Upsilon|^2 (M<=256, B0>=6)", worst, 0.0, worst == 0.0))
    slope = bounds.required_feedback_bits(5, 8.0, 4) - bounds.required_feedback_bits(5, 5.0, 4)
    out.append(_check("required bits slope over 3 dB equals P-1", abs(slope - 4), 1e-12, abs(slope - 4) <= 1e-12))
    return out


def codebook_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    geom = ArrayGeometry.ula(128)
    out = []
    inner = build_rvq(rng, 4, 12)
    trials = 2000
    for bits in (3, 6, 9, 12):
        errs = np.empty(trials)
        cb_inner = inner.prefix(1 << bits)
        for t in range(trials):
            ps = draw_path_set(rng, 4, geom)
            a = steering_matrix(geom, ps)
            errs[t] = quantize(a @ ps.gains, build_subspace(a, cb_inner)).chordal_error
        bound = bounds.quantization_error_bound(bits, 4)
        mean = errs.mean()
        se = errs.std(ddof=1) / np.sqrt(trials)
        out.append(_check(f"subspace error below 2^(-B/3), B={bits}", mean, bound + 3 * se, mean < bound + 3 * se))
    lloyd = build_lloyd_inner(rng, 4, 5, 10_000)
    hist = np.diff(lloyd.history)
    out.append(_check("Lloyd distortion non-increasing", float(hist.max(initial=0.0)), 1e-12,
                      hist.max(initial=0.0) <= 1e-12))
    small = build_rvq(np.random.default_rng(seed + 1), 4, 3).vectors
    big = build_rvq(np.random.default_rng(seed + 1), 4, 6).vectors
    d = float(np.max(np.abs(small - big[:8])))
    out.append(_check("RVQ codebooks nested", d, 0.0, d == 0.0))
    return out


def channel_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    out = []
    geom = ArrayGeometry.ula(128)
    a = steering_matrix_from_angles(geom, rng.uniform(-np.pi / 2, np.pi / 2, 64))
    dev = float(np.max(np.abs(np.linalg.norm(a, axis=0) - 1)))
    out.append(_check("steering vectors unit norm", dev, 1e-12, dev <= 1e-12))
    az = np.arcsin(np.array([-0.6, -0.1, 0.35, 0.8]))
    offs = []
    for m in (32, 64, 128, 256, 512):
        g = np.abs(steering_matrix_from_angles(ArrayGeometry.ula(m), az).conj().T
                   @ steering_matrix_from_angles(ArrayGeometry.ula(m), az))
        offs.append(float(np.max(g - np.diag(np.diag(g)))))
    out.append(_check("max off-diagonal |A^H A| at M=128", offs[2], 0.1, offs[2] <= 0.1))
    out.append(_check("off-diagonal shrinks from M=32 to M=512", offs[-1] - offs[0], 0.0, offs[-1] < offs[0]))
    draw = draw_users(rng, LinkConfig())
    v = zf_precoder(draw.H)
    g = draw.H.conj().T @ v
    res = float(np.max(np.abs(g - np.diag(np.diag(g)))))
    out.append(_check("ZF residual on true channels", res, 1e-8, res <= 1e-8))
    return out


SUITES = {"bounds": bounds_suite, "codebook": codebook_suite, "channel": channel_suite}


def run_suites(name: str = "all", seed: int = 0):
    names = list(SUITES) if name == "all" else [name]
    results = []
    for n in names:
        results += [(n,) + r for r in SUITES[n](seed)]
    return results
