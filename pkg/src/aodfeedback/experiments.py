"""Monte Carlo sweeps, presets for the reproduced figures, and CSV output.

A scenario fixes the array, user/path counts, the schemes to compare and
one swept parameter (optionally crossed with a second "series" parameter).
Every trial draws its channels once and evaluates all sweep points and
schemes on them, so curves share common random numbers.

Seeding: trial ``t`` draws from ``SeedSequence(master_seed, spawn_key=(0, t, stream, P))``
with separate streams for channels, AoD acquisition and analog noise;
shared codebooks come from ``spawn_key=(1, ...)``. Results depend only on
the configuration and the master seed, not on the thread count.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds
from . import linkrate as lr
from .channel import ArrayGeometry, ensemble_correlation
from .codebook import (
    MAX_CODEBOOK_SIZE,
    Codebook,
    build_lloyd_inner,
    build_rvq,
    codebook_size,
    rotate_codebook,
    sqrt_psd,
)

SCHEMES = ("subspace_rvq", "subspace_lloyd", "subspace_exact", "rvq_full", "rotated_stats", "analog")
SUBSPACE_SCHEMES = ("subspace_rvq", "subspace_lloyd", "subspace_exact")
SWEEP_VARS = ("snr_db", "aod_bits", "mu", "gamma_u", "paths", "bits")
BITS_RULES = ("snr", "fixed", "budget")
THREADS_ENV = "AODFEEDBACK_THREADS"

_STREAM_CHANNEL, _STREAM_AOD, _STREAM_NOISE = 0, 1, 2


class ConfigError(ValueError):
    """Invalid scenario; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# key -> help text; also drives the config-file parser and --help output
CONFIG_KEYS = {
    "name": "scenario label written to the metadata",
    "array": "ula | upa",
    "m1": "horizontal elements (M for a ULA)",
    "m2": "vertical elements (1 for a ULA)",
    "spacing_ratio": "antenna spacing over wavelength, d/lambda",
    "users": "number of users U",
    "paths": "resolvable paths per user P",
    "aod_mode": "exact | music",
    "snapshots": "channel snapshots for the MUSIC covariance",
    "grid_step": "MUSIC sin-space grid step",
    "aod_bits": "bits per quantized AoD coordinate B0 (none = unquantized)",
    "schemes": "comma list of " + " | ".join(SCHEMES),
    "bits_rule": "snr: B = ceil((P-1)/3 SNR) | fixed: B = bits | budget: B = mu P log2(1 + gamma_u)",
    "bits": "feedback bits for bits_rule = fixed",
    "total_bits": "equal-budget comparison: subspace schemes get total_bits minus the amortized AoD bits",
    "angle_coherence_ratio": "angle coherence time over channel coherence time",
    "mu": "uplink channel uses per fed-back gain (analog)",
    "gamma_u": "uplink SNR, linear",
    "snr_db": "receiver SNR 10 log10((gamma/U) E||h||^2) in dB when not swept",
    "sweep": "swept parameter: " + " | ".join(SWEEP_VARS),
    "sweep_values": "comma list of sweep values",
    "series": "optional second parameter crossed with the sweep",
    "series_values": "comma list of series values",
    "trials": "Monte Carlo trials per point",
    "master_seed": "master seed",
    "threads": "worker threads (default from " + THREADS_ENV + ")",
    "correlation": "statistics of the rotated baseline: ensemble | instantaneous",
    "lloyd_training": "Lloyd training vectors (default max(50 * 2^B, 10000))",
    "lloyd_iters": "Lloyd iteration cap",
    "lloyd_tol": "Lloyd relative-improvement stopping tolerance",
    "separation_floor": "minimum sin-space gap between a user's paths (default 4/(M d/lambda))",
    "shared_cluster": "all users share the first user's AoDs",
    "mode": "sweep | required_bits (search the smallest B meeting gap_target)",
    "gap_target": "rate-gap target in bits/s/Hz for mode = required_bits",
    "search_min_bits": "lower end of the bit search",
    "search_max_bits": "upper end of the bit search",
}


@dataclass
class ScenarioConfig:
    name: str = "custom"
    array: str = "ula"
    m1: int = 128
    m2: int = 1
    spacing_ratio: float = 0.5
    users: int = 4
    paths: int = 4
    aod_mode: str = "exact"
    snapshots: int = 200
    grid_step: float = 1e-3
    aod_bits: int | None = None
    schemes: tuple = ("subspace_rvq",)
    bits_rule: str = "snr"
    bits: float = 8.0
    total_bits: float | None = None
    angle_coherence_ratio: float = 10.0
    mu: float = 0.5
    gamma_u: float = 5.0
    snr_db: float = 10.0
    sweep: str = "snr_db"
    sweep_values: tuple = tuple(float(s) for s in range(13))
    series: str | None = None
    series_values: tuple = ()
    trials: int = 2000
    master_seed: int = 1
    threads: int = field(default_factory=default_threads)
    correlation: str = "ensemble"
    lloyd_training: int | None = None
    lloyd_iters: int = 100
    lloyd_tol: float = 1e-4
    separation_floor: float | None = None
    shared_cluster: bool = False
    mode: str = "sweep"
    gap_target: float = 0.13
    search_min_bits: int = 1
    search_max_bits: int = 20

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.array, self.m1, self.m2, self.spacing_ratio)

    def validate(self) -> list:
        errs = []
        try:
            geom = self.geometry()
        except ValueError as e:
            errs.append(f"array: {e}")
            geom = None
        if self.users < 1:
            errs.append("users must be >= 1")
        if geom is not None and self.users > geom.num_antennas:
            errs.append("users cannot exceed the antenna count")
        if self.paths < 1:
            errs.append("paths must be >= 1")
        if self.aod_mode not in ("exact", "music"):
            errs.append(f"aod_mode must be exact or music, not {self.aod_mode!r}")
        if self.aod_bits is not None and self.aod_bits < 1:
            errs.append("aod_bits must be >= 1 (or none)")
        if not self.schemes:
            errs.append("schemes must name at least one scheme")
        for s in self.schemes:
            if s not in SCHEMES:
                errs.append(f"unknown scheme {s!r}")
        if self.bits_rule not in BITS_RULES:
            errs.append(f"bits_rule must be one of {', '.join(BITS_RULES)}")
        if self.bits < 0:
            errs.append("bits must be >= 0")
        if self.sweep not in SWEEP_VARS:
            errs.append(f"sweep must be one of {', '.join(SWEEP_VARS)}")
        if self.series is not None and (self.series not in SWEEP_VARS or self.series == self.sweep):
            errs.append("series must be a sweepable parameter different from sweep")
        if self.series is not None and not self.series_values:
            errs.append("series_values is empty")
        if not self.sweep_values and self.mode == "sweep":
            errs.append("sweep_values is empty")
        if self.trials < 1:
            errs.append("trials must be >= 1")
        if self.threads < 1:
            errs.append("threads must be >= 1")
        if self.correlation not in ("ensemble", "instantaneous"):
            errs.append("correlation must be ensemble or instantaneous")
        if self.angle_coherence_ratio < 1:
            errs.append("angle_coherence_ratio must be >= 1")
        if self.mode not in ("sweep", "required_bits"):
            errs.append("mode must be sweep or required_bits")
        if self.mode == "required_bits":
            if self.sweep != "paths":
                errs.append("required_bits mode sweeps paths")
            if not 0 <= self.search_min_bits <= self.search_max_bits:
                errs.append("need 0 <= search_min_bits <= search_max_bits")
        if self.grid_step <= 0 or self.snapshots < 1:
            errs.append("grid_step must be positive and snapshots >= 1")
        for key, values in ((self.sweep, self.sweep_values), (self.series, self.series_values)):
            if key in ("mu", "gamma_u") and any(v <= 0 for v in values):
                errs.append(f"{key} values must be positive")
            if key == "paths" and any(v < 1 or v != int(v) for v in values):
                errs.append("paths values must be positive integers")
            if key == "aod_bits" and any(v < 1 or v != int(v) for v in values):
                errs.append("aod_bits values must be positive integers")
        if "analog" in self.schemes and not (self.mu > 0 and self.gamma_u > 0):
            errs.append("analog feedback needs mu > 0 and gamma_u > 0")
        return errs

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("threads")  # never affects results
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- presets -------------------------------------------------------------

_SNR_SWEEP = tuple(float(s) for s in range(13))

PRESETS = {
    # rate vs SNR with B = ceil((P-1)/3 SNR)
    "fig3": dict(schemes=("subspace_rvq", "rotated_stats"), bits_rule="snr",
                 sweep="snr_db", sweep_values=_SNR_SWEEP),
    # bits needed to hold the gap within 0.13 bps/Hz at 5 dB
    "fig4": dict(mode="required_bits", schemes=("subspace_rvq",), snr_db=5.0, sweep="paths",
                 sweep_values=(2.0, 3.0, 4.0, 5.0, 6.0), gap_target=0.13),
    "fig5": dict(schemes=("subspace_rvq", "subspace_lloyd", "rotated_stats"), bits_rule="snr",
                 sweep="snr_db", sweep_values=_SNR_SWEEP),
    # quantized AoDs, SNR 6 dB, B = 8
    "fig6": dict(schemes=("subspace_rvq", "subspace_exact"), bits_rule="fixed", bits=8.0, snr_db=6.0,
                 sweep="aod_bits", sweep_values=tuple(float(b) for b in range(2, 11))),
    # 8 bits in total: rotated baseline B = 8, subspace B = 8 - round(P B0 / 10)
    "fig7": dict(schemes=("subspace_rvq", "rotated_stats"), bits_rule="fixed", total_bits=8.0,
                 aod_bits=8, sweep="snr_db", sweep_values=_SNR_SWEEP),
    "fig8": dict(schemes=("subspace_rvq", "analog"), bits_rule="budget", gamma_u=5.0, snr_db=10.0,
                 sweep="mu", sweep_values=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.5)),
    "fig9": dict(schemes=("subspace_rvq", "analog"), bits_rule="budget", snr_db=10.0,
                 sweep="gamma_u", sweep_values=(1.0, 2.0, 5.0, 10.0, 20.0, 40.0),
                 series="mu", series_values=(0.5, 0.8)),
}


def preset(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {', '.join(PRESETS)}"])
    return ScenarioConfig(name=name, **{**PRESETS[name], **overrides})


# -- config files --------------------------------------------------------

def _parse_value(key: str, raw: str):
    raw = raw.strip()
    fld = {f.name: f for f in dataclasses.fields(ScenarioConfig)}[key]
    default = fld.default if fld.default is not dataclasses.MISSING else None
    optional = "None" in str(fld.type)
    if raw.lower() in ("none", "") and (optional or key == "series"):
        return None
    if key in ("schemes",):
        return tuple(s.strip() for s in raw.split(",") if s.strip())
    if key in ("sweep_values", "series_values"):
        return tuple(float(s) for s in raw.split(",") if s.strip())
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if key in ("threads",) or isinstance(default, int) or "int" in str(fld.type):
        return int(raw)
    if isinstance(default, float) or "float" in str(fld.type):
        return float(raw)
    return raw


def parse_config_text(text: str) -> ScenarioConfig:
    """Flat ``key = value`` lines, ``#`` comments; ``preset = figN`` sets the base."""
    values, errs, base = {}, [], None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errs.append(f"line {lineno}: expected key = value")
            continue
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            base = raw
            continue
        if key not in CONFIG_KEYS:
            errs.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as e:
            errs.append(f"line {lineno}: {e}")
    if base is not None and base not in PRESETS:
        errs.append(f"unknown preset {base!r}")
        base = None
    cfg = preset(base, **values) if base else ScenarioConfig(**values)
    errs += cfg.validate()
    if errs:
        raise ConfigError(errs)
    return cfg


def load_config(path) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


# -- helpers -------------------------------------------------------------

def amortized_aod_bits(num_paths: int, aod_bits: float, angle_coherence_ratio: float,
                       array: str = "ula") -> float:
    """Average per-block AoD feedback: ``P B0 / ratio`` (doubled for a UPA)."""
    if angle_coherence_ratio < 1:
        raise ValueError("angle_coherence_ratio must be >= 1")
    per_path = 2 if array == "upa" else 1
    return per_path * num_paths * aod_bits / angle_coherence_ratio


def bits_for_snr(num_paths: int, snr_db: float) -> int:
    """``ceil((P-1)/3 SNR_dB)``, at least 0."""
    return max(0, math.ceil((num_paths - 1) / 3.0 * snr_db - 1e-9))


@dataclass(frozen=True)
class Point:
    snr_db: float
    aod_bits: int | None
    mu: float
    gamma_u: float
    paths: int
    bits: dict
    sweep_value: float
    series_value: float | None

    def gamma(self, users: int) -> float:
        return bounds.gamma_from_snr_db(self.snr_db, users, self.paths)


def resolve_point(cfg: ScenarioConfig, sweep_value, series_value=None) -> Point:
    v = dict(snr_db=cfg.snr_db, aod_bits=cfg.aod_bits, mu=cfg.mu, gamma_u=cfg.gamma_u,
             paths=cfg.paths, bits=cfg.bits)
    for key, val in ((cfg.sweep, sweep_value), (cfg.series, series_value)):
        if key is not None and val is not None:
            v[key] = int(val) if key in ("paths", "aod_bits") else float(val)
    p = v["paths"]
    if cfg.bits_rule == "snr":
        base = bits_for_snr(p, v["snr_db"])
    elif cfg.bits_rule == "budget":
        base = bounds.budget_bits(v["mu"], p, v["gamma_u"])
    else:
        base = v["bits"]
    per = {}
    for s in cfg.schemes:
        if s == "analog":
            continue
        b = base
        if cfg.total_bits is not None:
            b = cfg.total_bits
            if s in SUBSPACE_SCHEMES and s != "subspace_exact" and v["aod_bits"] is not None:
                b -= round(amortized_aod_bits(p, v["aod_bits"], cfg.angle_coherence_ratio, cfg.array))
            b = max(b, 0)
        per[s] = b
    return Point(v["snr_db"], v["aod_bits"], v["mu"], v["gamma_u"], p, per, float(sweep_value),
                 None if series_value is None else float(series_value))


def points_for(cfg: ScenarioConfig) -> list:
    series = cfg.series_values if cfg.series is not None else (None,)
    pts = [resolve_point(cfg, v, s) for s in series for v in cfg.sweep_values]
    return sorted(pts, key=lambda p: (p.sweep_value, -math.inf if p.series_value is None else p.series_value))


def _seed(master: int, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=tuple(int(k) for k in key))


def _rng(master: int, *key) -> np.random.Generator:
    return np.random.default_rng(_seed(master, *key))


# -- shared codebooks ----------------------------------------------------

class _Codebooks:
    """Run-wide codebooks, built once before the trials start."""

    def __init__(self, cfg: ScenarioConfig, points):
        self.cfg = cfg
        geom = cfg.geometry()
        self.inner = {}
        self.lloyd = {}
        self.full = None
        self.rotated = None
        need_inner, need_full = {}, 0.0
        for pt in points:
            for s, b in pt.bits.items():
                if s in ("subspace_rvq", "subspace_exact"):
                    need_inner[pt.paths] = max(need_inner.get(pt.paths, 0.0), b)
                elif s == "subspace_lloyd":
                    self.lloyd.setdefault((pt.paths, codebook_size(b)), b)
                else:
                    need_full = max(need_full, b)
        for p, b in sorted(need_inner.items()):
            self.inner[p] = build_rvq(_rng(cfg.master_seed, 1, 0, p), p, b)
        for (p, n), b in sorted(self.lloyd.items()):
            self.lloyd[(p, n)] = build_lloyd_inner(
                _rng(cfg.master_seed, 1, 2, p, n), p, b, cfg.lloyd_training, cfg.lloyd_iters, cfg.lloyd_tol)
        if any(s in ("rvq_full", "rotated_stats") for s in cfg.schemes):
            self.full = build_rvq(_rng(cfg.master_seed, 1, 1), geom.num_antennas, need_full)
            if "rotated_stats" in cfg.schemes and cfg.correlation == "ensemble":
                # the rotation is scale-free, so one codebook serves every P
                r = sqrt_psd(ensemble_correlation(geom, 1))
                self.rotated = rotate_codebook(r, self.full.vectors, need_full)

    def inner_for(self, scheme: str, paths: int, bits: float) -> Codebook:
        n = codebook_size(bits)
        if scheme == "subspace_lloyd":
            return self.lloyd[(paths, n)]
        return self.inner[paths].prefix(n)

    def full_for(self, scheme: str, bits: float) -> Codebook:
        n = codebook_size(bits)
        if scheme == "rotated_stats" and self.rotated is not None:
            return self.rotated.prefix(n)
        return self.full.prefix(n)


# -- trials --------------------------------------------------------------

def _link_config(cfg: ScenarioConfig, pt: Point, scheme: str) -> lr.LinkConfig:
    exact = scheme == "subspace_exact"
    kind = {"subspace_exact": "subspace_rvq"}.get(scheme, scheme)
    return lr.LinkConfig(
        geometry=cfg.geometry(), users=cfg.users, paths=pt.paths, gamma=pt.gamma(cfg.users),
        bits=pt.bits.get(scheme, 0.0), codebook=kind if kind != "analog" else "subspace_rvq",
        aod_mode="exact" if exact else cfg.aod_mode, aod_bits=None if exact else pt.aod_bits,
        snapshots=cfg.snapshots, grid_step=cfg.grid_step, separation_floor=cfg.separation_floor,
        shared_cluster=cfg.shared_cluster, correlation=cfg.correlation, mu=pt.mu, gamma_u=pt.gamma_u,
    )


def _trial(cfg: ScenarioConfig, points, books: _Codebooks, t: int) -> np.ndarray:
    """User-averaged rates ``[point, column]``, ideal first, then the schemes.

    A scheme whose fed-back matrix is rank-deficient gets NaN for that
    point (the trial is discarded for that scheme only).
    """
    out = np.full((len(points), 1 + len(cfg.schemes)), np.nan)
    draws = {}
    for ip, pt in enumerate(points):
        if pt.paths not in draws:
            base = lr.LinkConfig(geometry=cfg.geometry(), users=cfg.users, paths=pt.paths,
                                 separation_floor=cfg.separation_floor, shared_cluster=cfg.shared_cluster)
            draw = lr.draw_users(_rng(cfg.master_seed, 0, t, _STREAM_CHANNEL, pt.paths), base)
            draw.rng_aod = _rng(cfg.master_seed, 0, t, _STREAM_AOD, pt.paths)
            try:
                v_ideal = lr.zf_precoder(draw.H)
            except lr.RankDeficientError:
                v_ideal = None
            draws[pt.paths] = (draw, v_ideal)
        draw, v_ideal = draws[pt.paths]
        if v_ideal is None:
            continue
        gamma = pt.gamma(cfg.users)
        out[ip, 0] = lr.evaluate_rates(draw.H, v_ideal, gamma).mean_rate
        for j, s in enumerate(cfg.schemes, start=1):
            lc = _link_config(cfg, pt, s)
            try:
                if s == "analog":
                    noise = _rng(cfg.master_seed, 0, t, _STREAM_NOISE, pt.paths)
                    h_fb, errs = lr.analog_channel(draw, pt.mu, pt.gamma_u, noise)
                    v = lr.zf_precoder(h_fb)
                    lr.check_analog_interference(draw, v, errs)
                else:
                    if s in SUBSPACE_SCHEMES:
                        h_fb, _ = lr.quantized_channel(draw, lc, inner=books.inner_for(s, pt.paths, lc.bits))
                    else:
                        h_fb, _ = lr.quantized_channel(draw, lc, full=books.full_for(s, lc.bits))
                    v = lr.zf_precoder(h_fb)
            except lr.RankDeficientError:
                continue
            out[ip, j] = lr.evaluate_rates(draw.H, v, gamma).mean_rate
    return out


def _run_trials(cfg: ScenarioConfig, points, books: _Codebooks) -> np.ndarray:
    """All trials in trial order, ``[trial, point, column]``."""
    n = cfg.trials
    threads = max(1, min(cfg.threads, n))
    if threads == 1:
        return np.stack([_trial(cfg, points, books, t) for t in range(n)])
    bounds_ = np.linspace(0, n, threads * 4 + 1).astype(int)
    chunks = [(a, b) for a, b in zip(bounds_[:-1], bounds_[1:]) if b > a]

    def work(ab):
        return [_trial(cfg, points, books, t) for t in range(*ab)]

    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(work, chunks))
    return np.stack([r for part in parts for r in part])


# -- results -------------------------------------------------------------

@dataclass
class ExperimentResult:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)
    sample_columns: list = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def paired_difference(self, a: str, b: str, point: int):
        """Mean and standard error of per-trial ``a - b`` rates at one point."""
        ia, ib = self.sample_columns.index(a), self.sample_columns.index(b)
        d = self.samples[:, point, ia] - self.samples[:, point, ib]
        d = d[np.isfinite(d)]
        return _mean_se(d)

    def __eq__(self, other):
        if not isinstance(other, ExperimentResult):
            return NotImplemented
        return (self.columns == other.columns and self.metadata == other.metadata
                and _rows_equal(self.rows, other.rows))


def _rows_equal(a, b):
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                continue
            if x != y:
                return False
    return True


def _mean_se(x: np.ndarray):
    n = x.size
    if n == 0:
        return math.nan, math.nan
    mean = float(math.fsum(x) / n)
    se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _metadata(cfg: ScenarioConfig) -> dict:
    return {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "master_seed": cfg.master_seed,
        "tool": "aodfeedback",
        "tool_version": __version__,
        "snr_convention": "SNR_dB = 10 log10((gamma/U) P), using the ensemble E||h||^2 = P",
    }


def _sweep_columns(cfg: ScenarioConfig) -> list:
    cols = [cfg.sweep] + ([cfg.series] if cfg.series else [])
    cols += ["rate_ideal", "rate_ideal_se"]
    for s in cfg.schemes:
        if s != "analog":
            cols.append(f"bits_{s}")
        cols += [f"rate_{s}", f"rate_{s}_se", f"gap_{s}", f"gap_{s}_se"]
    cols += ["gap_bound_quantized", "gap_bound_analog", "gap_bound_budget", "trials"]
    cols += [f"discarded_{s}" for s in cfg.schemes]
    return cols


def _bound_values(cfg: ScenarioConfig, pt: Point):
    gamma = pt.gamma(cfg.users)
    q = a = budget = math.nan
    sub = [s for s in cfg.schemes if s in SUBSPACE_SCHEMES]
    if sub and pt.paths >= 2:
        beta = 0.0
        if pt.aod_bits is not None and sub[0] != "subspace_exact":
            m2 = cfg.m2 if cfg.array == "upa" else None
            beta = bounds.k_squared_bound(cfg.m1, cfg.spacing_ratio, 2.0, pt.aod_bits, m2).beta
        q = bounds.rate_gap_quantized_bound(cfg.users, gamma, pt.paths, None, pt.bits[sub[0]], pt.paths, beta)
    if "analog" in cfg.schemes or cfg.bits_rule == "budget":
        a = bounds.rate_gap_analog_bound(cfg.users, gamma, pt.mu, pt.gamma_u)
        if pt.paths >= 2:
            budget = bounds.rate_gap_quantized_budget_bound(gamma, pt.paths, pt.mu, pt.gamma_u)
    return [q, a, budget]


def _summarize(cfg: ScenarioConfig, points, samples: np.ndarray) -> list:
    rows = []
    for ip, pt in enumerate(points):
        block = samples[:, ip, :]
        ideal = block[:, 0]
        base = np.isfinite(ideal)
        row = [pt.sweep_value] + ([pt.series_value] if cfg.series else [])
        row += list(_mean_se(ideal[base]))
        dropped = []
        for j, s in enumerate(cfg.schemes, start=1):
            ok = base & np.isfinite(block[:, j])
            if s != "analog":
                row.append(float(pt.bits[s]))
            row += list(_mean_se(block[ok, j]))
            row += list(_mean_se(ideal[ok] - block[ok, j]))
            dropped.append(int(base.sum() - ok.sum()))
        row += _bound_values(cfg, pt)
        row += [int(base.sum())] + dropped
        rows.append(row)
    return rows


def run(cfg: ScenarioConfig) -> ExperimentResult:
    """Run a scenario; raises :class:`ConfigError` listing every problem."""
    errs = cfg.validate()
    if errs:
        raise ConfigError(errs)
    if cfg.mode == "required_bits":
        return _run_required_bits(cfg)
    points = points_for(cfg)
    books = _Codebooks(cfg, points)
    samples = _run_trials(cfg, points, books)
    return ExperimentResult(_sweep_columns(cfg), _summarize(cfg, points, samples), _metadata(cfg),
                            samples, ["ideal"] + list(cfg.schemes))


def _run_required_bits(cfg: ScenarioConfig) -> ExperimentResult:
    """Smallest integer B with measured subspace gap <= gap_target.

    Exponential search up from ``search_min_bits`` brackets the answer and
    bisection narrows it; the gap is assumed non-increasing in B (nested
    codebooks make it so per trial up to ZF effects).
    """
    cols = ["paths", "required_bits_theory", "required_bits_empirical", "gap_at_required",
            "gap_at_required_se", "trials", "discarded"]
    rows = []
    scheme = cfg.schemes[0]
    for p in sorted(int(v) for v in cfg.sweep_values):
        theory = bounds.required_feedback_bits(p, cfg.snr_db, cfg.users, None, 2.0 ** cfg.gap_target) \
            if p >= 2 else math.nan
        probes = {}

        def gap(b, p=p):
            if b not in probes:
                sub = cfg.replace(mode="sweep", schemes=(scheme,), bits_rule="fixed", bits=float(b),
                                  paths=p, sweep="bits", sweep_values=(float(b),), series=None,
                                  series_values=())
                res = run(sub)
                i = res.columns.index(f"gap_{scheme}")
                t_i = res.columns.index("trials")
                probes[b] = (res.rows[0][i], res.rows[0][i + 1], res.rows[0][t_i], res.rows[0][-1])
            return probes[b]

        lo, cap = cfg.search_min_bits, min(cfg.search_max_bits, int(math.log2(MAX_CODEBOOK_SIZE)))
        # gallop upward so the costly large codebooks are only probed when needed
        found, step, hi = None, 1, lo
        if gap(lo)[0] <= cfg.gap_target:
            found = lo
        else:
            while hi < cap:
                lo, hi = hi, min(hi + step, cap)
                step *= 2
                if gap(hi)[0] <= cfg.gap_target:
                    break
            else:
                hi = None
            if hi is not None:
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if gap(mid)[0] <= cfg.gap_target:
                        hi = mid
                    else:
                        lo = mid
                found = hi
        if found is None:
            g, se, n, d = gap(cap)
            rows.append([float(p), theory, math.nan, g, se, n, d])
        else:
            g, se, n, d = gap(found)
            rows.append([float(p), theory, float(found), g, se, n, d])
    return ExperimentResult(cols, rows, _metadata(cfg))


# -- CSV -----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def format_csv(result: ExperimentResult) -> str:
    lines = [",".join(result.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in result.rows]
    return "\n".join(lines) + "\n"


def emit_csv(result: ExperimentResult, path, metadata: bool = True) -> Path:
    """Write the table (and a ``.json`` metadata sidecar next to it)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(format_csv(result))
    if metadata:
        side = path.with_name(path.name + ".json")
        side.write_text(json.dumps(result.metadata, sort_keys=True, indent=2, default=list) + "\n",
                        encoding="utf-8")
    return path


def read_csv(path):
    """Parse a table written by :func:`emit_csv`: ``(columns, rows)`` with floats."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        return [], []
    cols = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        rows.append([math.nan if v in ("", "nan") else float(v) for v in ln.split(",")])
    return cols, rows
