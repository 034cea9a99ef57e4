"""Lyapunov exponents of the transfer-matrix cocycle, uniformity over hull
samples, exponential splitting, and the semi-uniform subadditive bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .measures import WindowMeasure
from .propagator import Propagator, TransferMatrix

UNIF_THRESHOLD = 5e-2


def dyadic_schedule(t_max: float, t_min: float = 1.0) -> list[float]:
    """``2^k`` for ``t_min <= 2^k < t_max``, then ``t_max``."""
    out = []
    k = math.ceil(math.log2(t_min)) if t_min > 0 else 0
    while 2.0 ** k < t_max:
        out.append(2.0 ** k)
        k += 1
    out.append(float(t_max))
    return out


def _as_measure(sample) -> WindowMeasure:
    return sample.measure if hasattr(sample, "measure") else sample


@dataclass
class LyapunovEstimate:
    E: float
    gamma_hat: float
    t_used: float
    slope_history: list[tuple[float, float]]
    tail_converged: bool = True


def growth_slopes(omega: WindowMeasure, energies, times: Sequence[float],
                  start: float = 0.0) -> np.ndarray:
    """``(1/t) ln ||T_E(t, alpha_start omega)||`` for each time (rows) and energy (columns)."""
    times = sorted(times)
    mats = Propagator(omega, energies).transfer(start, start + times[-1],
                                                [start + t for t in times[:-1]])
    return np.array([m.log_norm() / t for m, t in zip(mats, times)])


def lyapunov_curve(omega: WindowMeasure, energies, t_max: float, start: float = 0.0) -> np.ndarray:
    """Vectorised ``gamma_hat(E)`` at ``t_max`` over an array of energies."""
    mats = Propagator(omega, energies).transfer(start, start + t_max)
    return np.maximum(mats.log_norm() / t_max, 0.0)


def lyapunov_estimate(omega: WindowMeasure, E: float, t_max: float,
                      band: float | None = None) -> LyapunovEstimate:
    """Finite-time Lyapunov exponent with its dyadic slope history.

    The tail is called converged when the last three slopes lie within
    ``band`` (default ``10 / t_max``).
    """
    omega.require(0.0, t_max)
    times = dyadic_schedule(t_max)
    slopes = np.maximum(growth_slopes(omega, np.array([E]), times)[:, 0], 0.0)
    history = [(t, float(s)) for t, s in zip(times, slopes)]
    band = 10.0 / t_max if band is None else band
    tail = slopes[-3:]
    return LyapunovEstimate(E, float(slopes[-1]), float(t_max), history,
                            bool(tail.max() - tail.min() <= band))


@dataclass
class UniformityReport:
    E: float
    gamma_hat: float
    times: list[float]
    deviations: np.ndarray          # shape (len(times), n_samples)
    labels: list[str] = field(default_factory=list)
    threshold: float = UNIF_THRESHOLD
    boundary_const: float = 0.0     # C in the O(C/t) resolution of a finite-time slope

    @property
    def sup_by_time(self) -> np.ndarray:
        return self.deviations.max(axis=1)

    @property
    def sup_deviation(self) -> float:
        return float(self.sup_by_time[-1])

    @property
    def strictly_decreasing(self) -> bool:
        """Raw non-increase of the sup curve, with no resolution allowance."""
        return bool(np.all(np.diff(self.sup_by_time) <= 0))

    @property
    def decreasing(self) -> bool:
        """Non-increase up to the resolution ``C / t`` of the later time."""
        s = self.sup_by_time
        floor = self.boundary_const / np.asarray(self.times[1:])
        return bool(np.all(np.diff(s) <= floor))

    @property
    def verdict(self) -> str:
        limit = max(self.threshold, 20.0 / self.times[-1])
        ok = self.decreasing and self.sup_deviation <= limit
        return "uniform-consistent" if ok else "non-uniform-suspect"


def uniformity_scan(samples, energies, times: Sequence[float] = (1e2, 1e3, 1e4),
                    gamma_ref=None, threshold: float = UNIF_THRESHOLD,
                    span: float | None = None) -> list[UniformityReport]:
    """Spread of ``(1/t) ln ||T_E(t, omega)||`` over hull samples.

    ``gamma_ref`` defaults to the slope of the first sample at the final time.
    ``span`` (typically the longest piece) sets the resolution allowance of
    the monotonicity check; without it the check is strict.
    """
    if len(samples) < 8:
        raise ValueError("uniformity scan needs at least 8 hull samples")
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    times = sorted(float(t) for t in times)
    slopes = np.stack([growth_slopes(_as_measure(s), energies, times) for s in samples], -1)
    # slopes: (time, energy, sample)
    gamma = slopes[-1, :, 0] if gamma_ref is None else np.broadcast_to(gamma_ref, energies.shape)
    gamma = np.maximum(gamma, 0.0)
    labels = [getattr(s, "label", str(i)) for i, s in enumerate(samples)]
    consts = boundary_constant(samples, energies, span) if span else np.zeros(len(energies))
    return [UniformityReport(float(E), float(g), times,
                             np.abs(slopes[:, i, :] - g), labels, threshold, float(c))
            for i, (E, g, c) in enumerate(zip(energies, gamma, consts))]


def boundary_constant(samples, energies, span: float, n_r: int = 16) -> np.ndarray:
    """``2 sup_{0 < r <= span} ln ||T_E(r, omega)||`` over the hull samples.

    Moving the start of a run by at most ``span`` changes ``ln ||T(t)||`` by
    at most this much, so finite-time slopes are only resolved to ``C / t``.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    rs = list(np.linspace(0.0, span, n_r + 1)[1:])
    worst = np.zeros(len(energies))
    for s in samples:
        mats = Propagator(_as_measure(s), energies).transfer(0.0, rs[-1], rs[:-1])
        for m in mats:
            worst = np.maximum(worst, m.log_norm())
    return 2.0 * worst


@dataclass
class SplittingCertificate:
    E: float
    contracting_angle: float
    expanding_angle: float
    kappa: float
    C: float
    gamma_hat: float
    residuals: np.ndarray
    angle_drift: float

    @property
    def contracting(self) -> np.ndarray:
        return np.array([math.cos(self.contracting_angle), math.sin(self.contracting_angle)])

    @property
    def expanding(self) -> np.ndarray:
        return np.array([math.cos(self.expanding_angle), math.sin(self.expanding_angle)])


def _least_expanded(t: TransferMatrix) -> np.ndarray:
    """Unit input direction with the smallest image under ``t``."""
    e = np.real_if_close(t.entries)
    _, _, vh = np.linalg.svd(e)
    return vh[-1]


def _angle(v: np.ndarray) -> float:
    a = math.atan2(v[1], v[0])
    return a % math.pi


def _proj_dist(a: float, b: float) -> float:
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def splitting_detect(omega: WindowMeasure, E: float, t_grid: Sequence[float],
                     threshold: float = 1e-3, angle_tol: float = 1e-6):
    """Contracting/expanding directions at ``omega`` for a hyperbolic energy.

    Returns None when the finite-time exponent is below ``threshold`` or the
    directions have not settled across the last points of ``t_grid``.
    """
    t_grid = sorted(float(t) for t in t_grid)
    prop = Propagator(omega, np.array([E]))
    fwd = prop.transfer(0.0, t_grid[-1], t_grid[:-1])
    gamma = max(float(fwd[-1].log_norm()[0]) / t_grid[-1], 0.0)
    if gamma <= threshold:
        return None
    back = [prop.transfer(0.0, -t) for t in t_grid]
    u_angles = [_angle(_least_expanded(m[0])) for m in fwd]
    v_angles = [_angle(_least_expanded(m[0])) for m in back]
    drift = max(_proj_dist(u_angles[-1], u_angles[-2]), _proj_dist(v_angles[-1], v_angles[-2]))
    if drift > angle_tol or _proj_dist(u_angles[-1], v_angles[-1]) < 1e-8:
        return None
    u = np.array([math.cos(u_angles[-1]), math.sin(u_angles[-1])])
    # decay of T(t) u on a fine grid, keeping only times where the image is
    # still resolved against the growing norm
    fine = list(np.linspace(0.0, t_grid[-1], 33)[1:])
    ts, logs = [0.0], [0.0]
    for t, m in zip(fine, prop.transfer(0.0, fine[-1], fine[:-1])):
        e = m.entries[0]
        img = np.linalg.norm(e @ u)
        if img <= 1e-8 * np.linalg.norm(e):
            break
        ts.append(t)
        logs.append(math.log(img) + float(m.log_scale[0]))
    ts, logs = np.array(ts), np.array(logs)
    if len(ts) >= 3:
        slope, icpt = np.polyfit(ts, logs, 1)
        kappa = -slope
    else:
        kappa, icpt = gamma, 0.0
    logC = float(np.max(logs + kappa * ts))
    residuals = logs - (icpt - kappa * ts)
    return SplittingCertificate(float(E), u_angles[-1], v_angles[-1], float(kappa),
                                math.exp(max(logC, 0.0)), gamma, residuals, drift)


def splitting_consistency(omega: WindowMeasure, E: float, t_grid: Sequence[float],
                          shifts: Sequence[float]) -> float | None:
    """Largest angle between the contracting direction found at a translate
    ``alpha_s omega`` and the direction at ``omega`` carried along by ``T(s)``.

    Continuous splitting makes the two agree; a finite set of hull samples can
    only show this consistency, not continuity itself.
    """
    base = splitting_detect(omega, E, t_grid)
    if base is None:
        return None
    prop = Propagator(omega, np.array([E]))
    worst = 0.0
    for s in shifts:
        cert = splitting_detect(omega.translate(s), E, t_grid)
        if cert is None:
            return None
        carried = prop.transfer(0.0, s).entries[0] @ base.contracting
        worst = max(worst, _proj_dist(_angle(np.real_if_close(carried)), cert.contracting_angle))
    return worst


@dataclass
class SemiUniformReport:
    E: float
    xbar: float
    epsilon: float
    times: list[float]
    sup_curve: np.ndarray

    @property
    def passed(self) -> bool:
        return bool(self.sup_curve[-1] <= self.xbar + self.epsilon)


def semi_uniform_harness(process: Callable[[object, float], float], samples,
                         times: Sequence[float], xbar: float, epsilon: float) -> SemiUniformReport:
    """Check ``sup_omega (1/t) X_t(omega) <= xbar + epsilon`` at the final time."""
    times = sorted(float(t) for t in times)
    sup = np.array([max(process(s, t) / t for s in samples) for t in times])
    return SemiUniformReport(float("nan"), float(xbar), float(epsilon), times, sup)


def semi_uniform_check(samples, E: float, times: Sequence[float], epsilon: float,
                       gamma_hat: float | None = None) -> SemiUniformReport:
    """Semi-uniform bound for ``X_t = ln ||T_E(t, .)||`` over hull samples."""
    times = sorted(float(t) for t in times)
    slopes = np.stack([growth_slopes(_as_measure(s), np.array([E]), times)[:, 0]
                       for s in samples], -1)
    g = max(float(slopes[-1, 0]), 0.0) if gamma_hat is None else gamma_hat
    return SemiUniformReport(float(E), g, float(epsilon), times, slopes.max(axis=1))


def subadditivity_gap(omega: WindowMeasure, E, s: float, t: float) -> np.ndarray:
    """``X_s(omega) + X_t(alpha_s omega) - X_{s+t}(omega)``; non-negative by
    submultiplicativity of the norm."""
    prop = Propagator(omega, E)
    x_s = prop.transfer(0.0, s).log_norm()
    x_t = prop.transfer(s, s + t).log_norm()
    x_st = prop.transfer(0.0, s + t).log_norm()
    return x_s + x_t - x_st


def signed_mass(omega: WindowMeasure, a: float, b: float) -> float:
    """``omega((a, b])`` including signs; an additive process in ``b - a``."""
    total = sum(m for x, m in omega.atoms() if a < x <= b)
    for s in omega.density_segments():
        lo, hi = max(a, s.lo), min(b, s.hi)
        if hi > lo:
            if s.samples is None:
                total += s.value * (hi - lo)
            else:
                xs = np.linspace(lo, hi, 65)
                total += float(np.trapezoid(s.values_at(xs), xs))
    return total


def gamma_translation_bound(omega: WindowMeasure, E: float, s: float, t_max: float) -> float:
    """Finite-time bound on ``|gamma_hat(omega) - gamma_hat(alpha_s omega)|``:
    ``2 sup_{|r| <= s} ln ||T_E(r, .)|| / t_max`` evaluated at both ends of the run."""
    prop = Propagator(omega, np.array([E]))
    worst = 0.0
    for r in np.linspace(0, s, 9)[1:]:
        worst = max(worst, float(prop.transfer(0.0, r).log_norm()[0]),
                    float(prop.transfer(t_max, t_max + r).log_norm()[0]))
    return 2.0 * worst / t_max
