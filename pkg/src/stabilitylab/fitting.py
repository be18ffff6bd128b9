"""Nonlinear least-squares fits of flux arches and T1 decays.

Both fits run MINPACK Levenberg-Marquardt (via scipy) with analytic
Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ConvergenceFailure, InsufficientPoints, NonPositiveT1
from .measurement import ArchScan
from .model import ej_for_sweet_spot

MAX_NFEV = 200
GTOL = 1e-10
MIN_ARCH_POINTS = 5
MIN_ARCH_SPAN = 0.1  # Phi0
MIN_T1_POINTS = 4


@dataclass(frozen=True, eq=False)
class ArchFit:
    f01_max: float  # GHz
    bias_at_max: float  # mA
    ec: float  # GHz
    residual_rms: float  # MHz
    covariance: np.ndarray  # 3x3, order (f01_max, bias_at_max, ec)
    nfev: int = 0

    @property
    def ej(self) -> float:
        return float(ej_for_sweet_spot(self.f01_max, self.ec))

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


@dataclass(frozen=True)
class T1Fit:
    t1: float  # us
    contrast: float
    floor: float
    t1_err: float
    contrast_err: float
    floor_err: float
    residual_rms: float
    nfev: int = 0

    def __iter__(self):
        return iter((self.t1, self.contrast, self.floor))


def arch_model(bias, f01max, bias_at_max, ec, mutual):
    c = np.cos(np.pi * mutual * (np.asarray(bias) - bias_at_max))
    return (f01max + ec) * np.sqrt(np.abs(c)) - ec


def _arch_jac(bias, f01max, bias_at_max, ec, mutual):
    arg = np.pi * mutual * (bias - bias_at_max)
    c, s = np.cos(arg), np.sin(arg)
    g = np.sqrt(np.abs(c))
    g_safe = np.where(g > 1e-12, g, 1e-12)
    d_bias = (f01max + ec) * np.sign(c) * s * np.pi * mutual / (2.0 * g_safe)
    return np.column_stack([g, d_bias, g - 1.0])


def _covariance(jac, resid, n, p):
    dof = max(n - p, 1)
    s2 = float(resid @ resid) / dof
    try:
        return np.linalg.inv(jac.T @ jac) * s2
    except np.linalg.LinAlgError:
        return np.full((p, p), np.nan)


def fit_arch(scan: ArchScan, *, ec_guess: float = 0.2) -> ArchFit:
    """Fit (f01max, bias_at_max, ec) to a measured arch.

    Three starts on the sweet-spot bias; the lowest residual wins.
    """
    bias, freqs, mutual = scan.bias_points, scan.freqs, scan.mutual
    if len(bias) < MIN_ARCH_POINTS:
        raise InsufficientPoints(f"arch fit needs >= {MIN_ARCH_POINTS} points, got {len(bias)}")
    span = abs(mutual) * float(np.ptp(bias))
    if span < MIN_ARCH_SPAN:
        raise InsufficientPoints(f"arch scan spans {span:.3g} Phi0, need >= {MIN_ARCH_SPAN}")

    weight = 1.0 / (scan.sigma_f * 1e-3) if scan.sigma_f > 0 else 1.0

    def resid(p):
        return (arch_model(bias, p[0], p[1], p[2], mutual) - freqs) * weight

    def jac(p):
        return _arch_jac(bias, p[0], p[1], p[2], mutual) * weight

    i_top = int(np.argmax(freqs))
    step = 0.05 / abs(mutual)
    starts = [bias[i_top], bias[i_top] - step, bias[i_top] + step]
    best = None
    last_nfev = 0
    for b0 in starts:
        x0 = np.array([freqs[i_top], b0, ec_guess])
        sol = least_squares(resid, x0, jac=jac, method="lm", max_nfev=MAX_NFEV,
                            xtol=1e-15, ftol=1e-15, gtol=GTOL)
        last_nfev = sol.nfev
        if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
            continue
        if best is None or sol.cost < best.cost:
            best = sol
    if best is None:
        raise ConvergenceFailure(f"arch fit did not converge from {len(starts)} starts "
                                 f"(iteration cap {MAX_NFEV})", nfev=last_nfev)

    f01max, b_max, ec = best.x
    if ec < 0:
        raise ConvergenceFailure(f"arch fit converged to unphysical ec={ec:.4g} GHz", nfev=best.nfev)
    # sweet spots repeat every 1/|mutual| mA; keep the one nearest the top of the data
    period = 1.0 / abs(mutual)
    b_max = b_max - period * np.round((b_max - bias[i_top]) / period)
    raw = arch_model(bias, f01max, b_max, ec, mutual) - freqs
    n = len(bias)
    cov = _covariance(best.jac / weight, raw, n, 3)
    return ArchFit(float(f01max), float(b_max), float(ec), float(np.sqrt(np.mean(raw**2)) * 1e3),
                   cov, int(best.nfev))


def _t1_guess(delays, probs):
    floor = float(probs[-1])
    amp = float(probs[0] - floor)
    if amp <= 0:
        floor = float(np.min(probs))
        amp = float(np.max(probs) - floor)
    target = floor + amp / np.e
    below = np.flatnonzero(probs <= target)
    t1 = float(delays[below[0]]) if below.size else float(delays[-1])
    t1 = max(t1, float(delays[0]), 1e-12)
    return np.array([amp, 1.0 / t1, floor])


def fit_t1(delays, probabilities) -> T1Fit:
    """Fit contrast * exp(-tau/T1) + floor; the decay rate 1/T1 is the fit variable."""
    tau = np.asarray(delays, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if tau.shape != p.shape or tau.ndim != 1:
        raise InsufficientPoints("delays and probabilities must be 1-D of equal length")
    if len(tau) < MIN_T1_POINTS:
        raise InsufficientPoints(f"T1 fit needs >= {MIN_T1_POINTS} points, got {len(tau)}")
    if np.any(np.diff(tau) <= 0):
        raise InsufficientPoints("delays must be strictly increasing")
    if np.ptp(p) == 0:
        raise ConvergenceFailure("trace shows no decay")

    scale = float(tau[-1])

    def resid(x):
        return x[0] * np.exp(-tau * x[1] / scale) + x[2] - p

    def jac(x):
        e = np.exp(-tau * x[1] / scale)
        return np.column_stack([e, -x[0] * tau / scale * e, np.ones_like(tau)])

    x0 = _t1_guess(tau, p)
    x0[1] *= scale
    sol = least_squares(resid, x0, jac=jac, method="lm", max_nfev=MAX_NFEV,
                        xtol=1e-15, ftol=1e-15, gtol=GTOL)
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise ConvergenceFailure(f"T1 fit did not converge: {sol.message}", nfev=sol.nfev)
    amp, k, floor = sol.x
    if k <= 0:
        raise NonPositiveT1(f"fitted decay rate {k / scale:.4g} /us gives non-positive T1")
    t1 = scale / k
    cov = _covariance(sol.jac, sol.fun, len(tau), 3)
    k_err = np.sqrt(max(cov[1, 1], 0.0))
    return T1Fit(float(t1), float(amp), float(floor), float(t1 * k_err / k),
                 float(np.sqrt(max(cov[0, 0], 0.0))), float(np.sqrt(max(cov[2, 2], 0.0))),
                 float(np.sqrt(np.mean(sol.fun**2))), int(sol.nfev))


def fit_t1_batch(delays, traces, *, max_iter: int = MAX_NFEV, tol: float = 1e-12) -> np.ndarray:
    """T1 (us) for each row of ``traces``, NaN where the fit fails.

    Vectorized Levenberg-Marquardt on the same model and parameterization as
    :func:`fit_t1`; one 3x3 solve per trace per iteration.
    """
    tau = np.asarray(delays, dtype=float)
    p = np.atleast_2d(np.asarray(traces, dtype=float))
    m = p.shape[0]
    scale = float(tau[-1])
    x = np.array([_t1_guess(tau, row) for row in p])
    x[:, 1] *= scale
    u = tau / scale

    def residuals(x):
        e = np.exp(-np.outer(x[:, 1], u))
        return x[:, :1] * e + x[:, 2:] - p, e

    r, e = residuals(x)
    cost = np.sum(r * r, axis=1)
    lam = np.full(m, 1e-3)
    active = np.ptp(p, axis=1) > 0
    done = ~active
    for _ in range(max_iter):
        if done.all():
            break
        jac = np.stack([e, -x[:, :1] * u * e, np.ones_like(e)], axis=2)  # m x n x 3
        jtj = np.einsum("mni,mnj->mij", jac, jac)
        g = np.einsum("mni,mn->mi", jac, r)
        damp = jtj + lam[:, None, None] * np.einsum("mii->mi", jtj)[:, :, None] * np.eye(3)
        try:
            step = -np.linalg.solve(damp, g[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = -np.stack([np.linalg.lstsq(d, gi, rcond=None)[0] for d, gi in zip(damp, g)])
        step[done] = 0.0
        x_new = x + step
        r_new, e_new = residuals(x_new)
        cost_new = np.sum(r_new * r_new, axis=1)
        better = (cost_new <= cost) & ~done
        small = np.max(np.abs(step) / (np.abs(x) + 1e-300), axis=1) < tol
        grad_small = np.max(np.abs(g), axis=1) < GTOL
        x = np.where(better[:, None], x_new, x)
        r = np.where(better[:, None], r_new, r)
        e = np.where(better[:, None], e_new, e)
        converged = better & (small | ((cost - cost_new) <= tol * cost))
        cost = np.where(better, cost_new, cost)
        lam = np.where(better, lam * 0.3, lam * 10.0)
        done |= converged | grad_small | (lam > 1e16)
    t1 = np.where(done & active & (x[:, 1] > 0), scale / x[:, 1], np.nan)
    return t1
