"""Transmon + TLS defect bath model.

Units used throughout: qubit and defect frequencies in GHz, relaxation rates
in 1/us, flux in flux quanta (Phi0), bias currents in mA, clock time in hours.
The bath prior quotes widths and couplings in MHz because that is the scale
they are naturally read at.

All state objects are frozen dataclasses; operations return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FluxOutOfRange, InvalidParameter
from .seeding import rng_from

MAX_FLUX = 0.45
TRANSMON_RATIO = 20.0


def sweet_spot_frequency(ej, ec):
    """sqrt(8 EJ EC) - EC, no parameter validation."""
    return np.sqrt(8.0 * ej * ec) - ec


def ej_for_sweet_spot(f01max, ec):
    """Inverse of :func:`sweet_spot_frequency` in EJ at fixed EC."""
    return (f01max + ec) ** 2 / (8.0 * ec)


@dataclass(frozen=True)
class TransmonParams:
    ej: float
    ec: float
    gamma0: float

    def __post_init__(self):
        if not self.ej > 0 or not self.ec > 0:
            raise InvalidParameter(f"ej and ec must be positive, got ej={self.ej}, ec={self.ec}")
        if self.ej / self.ec < TRANSMON_RATIO:
            raise InvalidParameter(f"ej/ec={self.ej / self.ec:.3g} is outside the transmon regime")
        if not self.gamma0 > 0:
            raise InvalidParameter(f"gamma0 must be positive, got {self.gamma0}")


@dataclass(frozen=True)
class FluxLine:
    mutual: float  # Phi0 per mA
    bias_offset: float  # mA
    flux_offset: float = 0.0  # Phi0

    def __post_init__(self):
        if self.mutual == 0:
            raise InvalidParameter("mutual must be non-zero")
        if abs(self.flux_offset) > 0.5:
            raise InvalidParameter(f"|flux_offset| must be <= 0.5, got {self.flux_offset}")

    @property
    def sweet_spot_bias(self) -> float:
        return self.bias_offset - self.flux_offset / self.mutual


@dataclass(frozen=True)
class TlsDefect:
    center_freq: float
    base_freq: float
    gamma_max: float
    width: float
    fluctuator_couplings: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class Fluctuator:
    rate: float  # 1/hour
    state: int


@dataclass(frozen=True)
class BathPrior:
    """Distribution the defect bath is drawn from at cooldown.

    Defects are placed uniformly over ``[f01max - window_below_mhz,
    f01max + window_above_mhz]`` of the qubit's first cooldown. Each defect
    owns ``fluctuators_per_defect`` private two-state fluctuators with
    switching rates; a fluctuator in state 1 shifts its defect by a
    Normal(0, coupling_mhz) amount fixed at draw time.

    Rates are drawn with density proportional to ``rate**-rate_exponent`` per
    unit log-rate over ``rate_range_per_hour``; ``rate_exponent = 0`` is the
    log-uniform ensemble, positive values favour slow fluctuators.
    """

    density_per_mhz: float = 0.025
    window_below_mhz: float = 400.0
    window_above_mhz: float = 60.0
    gamma_max_range: tuple[float, float] = (1 / 10, 2.0)
    width_mhz_range: tuple[float, float] = (0.5, 3.0)
    fluctuators_per_defect: int = 40
    coupling_mhz: float = 25.0
    rate_range_per_hour: tuple[float, float] = (1e-6, 1e1)
    rate_exponent: float = 0.6

    def __post_init__(self):
        lo, hi = self.gamma_max_range
        if not 0 <= lo <= hi:
            raise InvalidParameter("gamma_max_range must satisfy 0 <= lo <= hi")
        lo, hi = self.width_mhz_range
        if not 0 < lo <= hi:
            raise InvalidParameter("width_mhz_range must satisfy 0 < lo <= hi")
        lo, hi = self.rate_range_per_hour
        if not 0 < lo <= hi:
            raise InvalidParameter("rate_range_per_hour must satisfy 0 < lo <= hi")
        if self.density_per_mhz < 0 or self.fluctuators_per_defect < 0 or self.coupling_mhz < 0:
            raise InvalidParameter("density, fluctuator count and coupling must be non-negative")


def _tilted_log_rates(rng, lo, hi, exponent, size):
    """Inverse-CDF draw from p(log r) ~ r**-exponent on [lo, hi]."""
    if exponent == 0 or lo == hi:
        return _log_uniform(rng, lo, hi, size)
    u = rng.random(size)
    a, b = lo ** -exponent, hi ** -exponent
    return (a + u * (b - a)) ** (-1.0 / exponent)


def _log_uniform(rng, lo, hi, size):
    if lo == hi:
        return np.full(size, float(lo))
    if lo == 0:
        return rng.uniform(lo, hi, size)
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


@dataclass(frozen=True, eq=False)
class TlsBath:
    """Defect modes plus the fluctuators that move them.

    ``couplings[k, m]`` is the shift (GHz) of defect ``k`` when fluctuator
    ``m`` is in state 1. The window ``(f_lo, f_hi)`` is fixed at first
    cooldown and reused whenever the bath is redrawn.
    """

    base_freq: np.ndarray
    gamma_max: np.ndarray
    width: np.ndarray
    couplings: np.ndarray
    rates: np.ndarray
    states: np.ndarray
    prior: BathPrior = field(default_factory=BathPrior)
    f_lo: float = 0.0
    f_hi: float = 0.0

    def __post_init__(self):
        n, m = len(self.base_freq), len(self.rates)
        if self.couplings.shape != (n, m) or len(self.gamma_max) != n or len(self.width) != n:
            raise InvalidParameter("inconsistent bath array shapes")
        if len(self.states) != m:
            raise InvalidParameter("one state per fluctuator is required")
        if np.any(self.gamma_max < 0) or np.any(self.width <= 0) or np.any(self.rates <= 0):
            raise InvalidParameter("gamma_max >= 0, width > 0 and rate > 0 required")
        for arr in (self.base_freq, self.gamma_max, self.width, self.couplings, self.rates, self.states):
            arr.flags.writeable = False

    @property
    def center_freq(self) -> np.ndarray:
        return self.base_freq + self.couplings @ self.states

    @property
    def n_defects(self) -> int:
        return len(self.base_freq)

    @property
    def n_fluctuators(self) -> int:
        return len(self.rates)

    def defects(self) -> list[TlsDefect]:
        centers = self.center_freq
        out = []
        for k in range(self.n_defects):
            idx = np.flatnonzero(self.couplings[k])
            out.append(TlsDefect(float(centers[k]), float(self.base_freq[k]), float(self.gamma_max[k]),
                                 float(self.width[k]),
                                 tuple((int(m), float(self.couplings[k, m])) for m in idx)))
        return out

    def fluctuators(self) -> list[Fluctuator]:
        return [Fluctuator(float(r), int(s)) for r, s in zip(self.rates, self.states)]

    def __eq__(self, other):
        if not isinstance(other, TlsBath):
            return NotImplemented
        return (self.prior == other.prior and self.f_lo == other.f_lo and self.f_hi == other.f_hi
                and all(np.array_equal(getattr(self, n), getattr(other, n))
                        for n in ("base_freq", "gamma_max", "width", "couplings", "rates", "states")))

    @classmethod
    def empty(cls) -> TlsBath:
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, 0)), np.zeros(0),
                   np.zeros(0, dtype=np.int8))

    @classmethod
    def from_defects(cls, centers, gamma_max, widths) -> TlsBath:
        """Static bath (no fluctuators) with the given defect lines."""
        centers = np.atleast_1d(np.asarray(centers, dtype=float))
        return cls(centers, np.atleast_1d(np.asarray(gamma_max, dtype=float)),
                   np.atleast_1d(np.asarray(widths, dtype=float)), np.zeros((len(centers), 0)),
                   np.zeros(0), np.zeros(0, dtype=np.int8))


def sample_bath(prior: BathPrior, f_lo: float, f_hi: float, seed) -> TlsBath:
    """Draw a bath from ``prior`` over the absolute window [f_lo, f_hi] (GHz)."""
    rng = rng_from(seed)
    n = int(round(prior.density_per_mhz * (f_hi - f_lo) * 1e3))
    k = prior.fluctuators_per_defect
    base = rng.uniform(f_lo, f_hi, n)
    gamma_max = _log_uniform(rng, *prior.gamma_max_range, n)
    width = _log_uniform(rng, *prior.width_mhz_range, n) * 1e-3
    rates = _tilted_log_rates(rng, *prior.rate_range_per_hour, prior.rate_exponent, n * k)
    shifts = rng.normal(0.0, prior.coupling_mhz * 1e-3, (n, k))
    couplings = np.zeros((n, n * k))
    for d in range(n):
        couplings[d, d * k:(d + 1) * k] = shifts[d]
    states = rng.integers(0, 2, n * k).astype(np.int8)
    # base_freq is the all-zero position; draw it so the *current* center is uniform
    base = base - couplings @ states
    return TlsBath(base, gamma_max, width, couplings, rates, states, prior, float(f_lo), float(f_hi))


@dataclass(frozen=True)
class DeviceState:
    params: TransmonParams
    flux_line: FluxLine
    bath: TlsBath
    clock: float = 0.0
    cycle_index: int = 1

    def __post_init__(self):
        if self.clock < 0:
            raise InvalidParameter("clock must be >= 0")
        if self.cycle_index < 1:
            raise InvalidParameter("cycle_index must be >= 1")


@dataclass(frozen=True)
class CyclePerturbation:
    """Stochastic reset applied by one warm-up/cool-down.

    ``reseed_tls`` and ``reset_clock`` exist so a control run can switch the
    reset off; physical runs leave both on.
    """

    sigma_f01: float = 2.5  # MHz
    flux_offset_dist: float = 0.12  # Phi0 half-width
    reseed_tls: bool = True
    reset_clock: bool = True

    def __post_init__(self):
        if self.sigma_f01 < 0:
            raise InvalidParameter("sigma_f01 must be >= 0")
        if not 0 <= self.flux_offset_dist <= 0.5:
            raise InvalidParameter("flux_offset_dist must lie in [0, 0.5]")

    @classmethod
    def disabled(cls) -> CyclePerturbation:
        return cls(0.0, 0.0, reseed_tls=False, reset_clock=False)


def f01_max(params: TransmonParams) -> float:
    return float(sweet_spot_frequency(params.ej, params.ec))


def f01_at_flux(params: TransmonParams, flux):
    """Symmetric-junction tuning curve; ``flux`` may be an array."""
    flux = np.asarray(flux, dtype=float)
    if np.any(np.abs(flux) > MAX_FLUX):
        raise FluxOutOfRange(f"|flux| must be <= {MAX_FLUX} Phi0, got max {np.max(np.abs(flux)):.4g}")
    f = np.sqrt(8.0 * params.ej * params.ec * np.abs(np.cos(np.pi * flux))) - params.ec
    return float(f) if f.ndim == 0 else f


def flux_from_bias(flux_line: FluxLine, bias):
    flux = flux_line.mutual * (np.asarray(bias, dtype=float) - flux_line.bias_offset) + flux_line.flux_offset
    return float(flux) if flux.ndim == 0 else flux


def reduce_flux(flux):
    """Fold a flux value into [-0.5, 0.5)."""
    return (np.asarray(flux) + 0.5) % 1.0 - 0.5


def tls_rate(bath: TlsBath, f):
    """Summed Lorentzian TLS relaxation rate (1/us) at frequency ``f`` (GHz)."""
    f = np.asarray(f, dtype=float)
    if bath.n_defects == 0:
        return np.zeros_like(f)
    half = 0.5 * bath.width
    detuning = f[..., None] - bath.center_freq
    return np.sum(bath.gamma_max * half**2 / (detuning**2 + half**2), axis=-1)


def t1_at_frequency(device: DeviceState, f):
    """T1 in us; vectorized over ``f``."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise InvalidParameter("frequency must be positive")
    t1 = 1.0 / (device.params.gamma0 + tls_rate(device.bath, f))
    return float(t1) if t1.ndim == 0 else t1


def flip_probability(rates, dt):
    """Probability that a symmetric telegraph fluctuator ends in the other state after ``dt``."""
    return 0.5 * (1.0 - np.exp(-2.0 * np.asarray(rates) * dt))


def advance_bath(device: DeviceState, dt: float, seed) -> DeviceState:
    """Let the fluctuators evolve for ``dt`` hours of cold time."""
    if dt < 0:
        raise InvalidParameter("dt must be >= 0")
    if dt == 0:
        return device
    bath = device.bath
    rng = rng_from(seed)
    flips = rng.random(bath.n_fluctuators) < flip_probability(bath.rates, dt)
    states = np.where(flips, 1 - bath.states, bath.states).astype(np.int8)
    return replace(device, bath=replace(bath, states=states), clock=device.clock + dt)


def apply_thermal_cycle(device: DeviceState, pert: CyclePerturbation, seed, *, extra_shift_mhz=0.0) -> DeviceState:
    """Warm-up and re-cool: shift f01max through EJ, redraw flux offset and bath.

    ``extra_shift_mhz`` adds a deterministic frequency jump on top of the
    random one (used for outlier injection).
    """
    rng = rng_from(seed)
    params = device.params
    shift = rng.normal(0.0, pert.sigma_f01) if pert.sigma_f01 > 0 else 0.0
    shift += extra_shift_mhz
    if shift != 0.0:
        target = f01_max(params) + shift * 1e-3
        params = replace(params, ej=float(ej_for_sweet_spot(target, params.ec)))

    line = device.flux_line
    if pert.flux_offset_dist > 0:
        line = replace(line, flux_offset=float(rng.uniform(-pert.flux_offset_dist, pert.flux_offset_dist)))

    bath = device.bath
    if pert.reseed_tls:
        bath = sample_bath(bath.prior, bath.f_lo, bath.f_hi, rng)

    clock = 0.0 if pert.reset_clock else device.clock
    return DeviceState(params, line, bath, clock, device.cycle_index + 1)


def initial_device(params: TransmonParams, flux_line: FluxLine, prior: BathPrior, seed) -> DeviceState:
    """Device at first cooldown with a bath drawn around its sweet spot."""
    fmax = f01_max(params)
    f_lo = fmax - prior.window_below_mhz * 1e-3
    f_hi = fmax + prior.window_above_mhz * 1e-3
    return DeviceState(params, flux_line, sample_bath(prior, f_lo, f_hi, seed))
