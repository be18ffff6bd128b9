"""Z-score normalization, spectral divergence and the T1 spectral topography fidelity."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import (DegenerateCalibration, DegenerateMap, DimensionMismatch, EmptySession,
                     InsufficientReplicas, InvalidParameter)
from .measurement import Spectrogram, SpectrogramMeta

STD_EPS = 1e-12
MIN_REPLICAS = 10


@dataclass(frozen=True, eq=False)
class NormalizedMap:
    values: np.ndarray
    meta: SpectrogramMeta = field(default_factory=SpectrogramMeta)

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class AnalysisConfig:
    """``delta_floor`` defaults to alpha/100, i.e. rho is capped at 100."""

    alpha: float
    delta_floor: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParameter("alpha must be > 0")
        if self.delta_floor is None:
            object.__setattr__(self, "delta_floor", self.alpha / 100.0)
        if not self.delta_floor > 0:
            raise InvalidParameter("delta_floor must be > 0")

    @property
    def rho_cap(self) -> float:
        return self.alpha / self.delta_floor


@dataclass(frozen=True)
class StfReport:
    delta: float
    rho: float
    pearson: float
    n: int
    dt_hours: float = float("nan")
    qubit: str = ""
    cycle_a: int = 0
    session_a: int = 0
    cycle_b: int = 0
    session_b: int = 0
    kind: str = ""

    @property
    def cycle_pair(self) -> tuple[int, int]:
        return self.cycle_a, self.cycle_b


@dataclass(frozen=True)
class SessionStats:
    mean_t1: float
    max_t1: float
    n_fits: int


def _matrix(x) -> tuple[np.ndarray, SpectrogramMeta]:
    if isinstance(x, (Spectrogram, NormalizedMap)):
        return np.asarray(x.values, dtype=float), x.meta
    return np.asarray(x, dtype=float), SpectrogramMeta()


def zscore_normalize(x) -> NormalizedMap:
    """Subtract the global mean and divide by the global population std."""
    values, meta = _matrix(x)
    if values.size == 0:
        raise DegenerateMap("empty map")
    std = values.std()
    if std <= STD_EPS:
        raise DegenerateMap(f"map has zero variance (std={std:.3g})")
    return NormalizedMap((values - values.mean()) / std, meta)


def _check_dims(a: NormalizedMap, b: NormalizedMap):
    if a.shape != b.shape:
        raise DimensionMismatch(f"map shapes differ: {a.shape} vs {b.shape}")


def spectral_divergence(a: NormalizedMap, b: NormalizedMap) -> float:
    """Euclidean distance between normalized maps divided by the pixel count."""
    _check_dims(a, b)
    diff = a.values - b.values
    return float(np.sqrt(np.sum(diff * diff)) / a.size)


def pearson(a: NormalizedMap, b: NormalizedMap) -> float:
    """Correlation of two already standardized maps, mean(a*b)."""
    _check_dims(a, b)
    r = float(np.sum(a.values * b.values) / a.size)
    return min(1.0, max(-1.0, r))


def divergence_from_pearson(r: float, n: int) -> float:
    return float(np.sqrt(max(0.0, 2.0 * (1.0 - r) / n)))


def rho_from_delta(delta: float, cfg: AnalysisConfig) -> float:
    return cfg.rho_cap if delta <= cfg.delta_floor else cfg.alpha / delta


def stf(a: NormalizedMap, b: NormalizedMap, cfg: AnalysisConfig) -> StfReport:
    delta = spectral_divergence(a, b)
    rho = rho_from_delta(delta, cfg)
    ma, mb = a.meta, b.meta
    dt = float("nan")
    if ma.cold_hours is not None and mb.cold_hours is not None:
        dt = abs(mb.cold_hours - ma.cold_hours)
    elif ma.cycle == mb.cycle:
        dt = abs(mb.clock_hours - ma.clock_hours)
    kind = "intra" if ma.cycle == mb.cycle else "inter"
    return StfReport(delta, rho, pearson(a, b), a.size, dt, ma.qubit, ma.cycle, ma.session,
                     mb.cycle, mb.session, kind)


def alpha_from_divergences(deltas: Iterable[float]) -> float:
    deltas = np.asarray(list(deltas), dtype=float)
    if deltas.size == 0:
        raise InsufficientReplicas("no replica divergences")
    alpha = float(np.median(deltas))
    if not alpha > 0:
        raise DegenerateCalibration("replica pairs are identical (alpha = 0); noise floor undefined")
    return alpha


def calibrate_alpha(replica_pairs) -> float:
    """Median divergence of noise-only replica pairs.

    Scoring those same pairs with the returned alpha gives a median rho of 1.
    """
    pairs = list(replica_pairs)
    if len(pairs) < MIN_REPLICAS:
        raise InsufficientReplicas(f"need >= {MIN_REPLICAS} replica pairs, got {len(pairs)}")
    return alpha_from_divergences(
        spectral_divergence(zscore_normalize(a), zscore_normalize(b)) for a, b in pairs)


def session_stats(t1_samples) -> SessionStats:
    samples = np.asarray(list(t1_samples), dtype=float)
    if samples.size == 0:
        raise EmptySession("no T1 samples in session")
    return SessionStats(float(samples.mean()), float(samples.max()), int(samples.size))
