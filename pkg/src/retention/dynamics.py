"""Survival probability of the initial excitation.

Two independent routes: the biorthogonal mode sum
``p_e(t) = |sum_l w_l exp(-i kappa_l t)|^2`` and direct fixed-step RK4
integration of ``dc/dt = -i H c``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from retention.errors import ConfigError, DegenerateSplit, NumericalFailure, StepTooLarge
from retention.hamiltonian import EffectiveHamiltonian
from retention.spectral import ModeWeights, SpectralData

T_STAR = 30.0
DEFAULT_SAMPLES = 3001


def default_times(t_end: float = T_STAR, samples: int = DEFAULT_SAMPLES, gamma0: float = 1.0) -> np.ndarray:
    return np.linspace(0.0, t_end / gamma0, samples)


def time_average(times: np.ndarray, p_e: np.ndarray, t_star: float) -> float:
    """Trapezoidal mean of ``p_e`` over ``[0, t_star]``; NaN if the grid does not cover it."""
    times = np.asarray(times, dtype=float)
    if times[0] != 0.0 or times[-1] < t_star * (1 - 1e-12):
        return math.nan
    mask = times <= t_star
    t, p = times[mask], p_e[mask]
    if t[-1] < t_star:
        t = np.append(t, t_star)
        p = np.append(p, np.interp(t_star, times, p_e))
    return float(trapezoid(p, t) / t_star)


@dataclass(frozen=True)
class SurvivalTrace:
    times: np.ndarray
    p_e: np.ndarray
    p_bar: float
    t_star: float = T_STAR
    norms: np.ndarray | None = field(default=None, repr=False)

    def at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.p_e))

    @property
    def final(self) -> float:
        """``p_e`` at the horizon ``t_star``."""
        return self.at(self.t_star)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "p_e"])
        for t, p in zip(self.times, self.p_e):
            writer.writerow([repr(float(t)), repr(float(p))])
        return buf.getvalue()


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size < 1 or not np.all(np.isfinite(times)):
        raise ConfigError("time grid must be a non-empty finite array")
    if np.any(np.diff(times) < 0):
        raise ConfigError("time grid must be non-decreasing")
    return times


def modesum_amplitude(kappa: np.ndarray, weights: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Survival amplitude ``sum_l w_l exp(-i kappa_l t)`` on ``times``."""
    return np.exp(-1j * np.outer(times, kappa)) @ weights


def survival_modesum(
    s: SpectralData, w: ModeWeights, times=None, t_star: float | None = None
) -> SurvivalTrace:
    times = _check_times(default_times(gamma0=s.gamma0) if times is None else times)
    t_star = T_STAR / s.gamma0 if t_star is None else t_star
    p_e = np.abs(modesum_amplitude(s.eigenvalues, w.weights, times)) ** 2
    return SurvivalTrace(times, p_e, time_average(times, p_e, t_star), t_star)


def step_bound(H: np.ndarray, gamma0: float = 1.0) -> float:
    """Largest admissible RK4 step: ``min(0.01/gamma0, 0.1/||H||_F)``."""
    return min(0.01 / gamma0, 0.1 / np.linalg.norm(H, "fro"))


def survival_ode(
    h: EffectiveHamiltonian,
    initial_state,
    times=None,
    t_star: float | None = None,
    substeps: int | None = None,
) -> SurvivalTrace:
    """Integrate the Schroedinger equation with classical RK4.

    Each grid interval is split into equal sub-steps no longer than
    :func:`step_bound`. Passing ``substeps`` fixes the split; a split that
    breaks the bound raises :class:`StepTooLarge`.
    """
    H = np.asarray(h.H)
    gamma0 = h.gamma0
    times = _check_times(default_times(gamma0=gamma0) if times is None else times)
    t_star = T_STAR / gamma0 if t_star is None else t_star
    c0 = np.asarray(initial_state, dtype=complex).reshape(-1)
    if c0.shape[0] != H.shape[0]:
        raise ConfigError("initial state dimension does not match the Hamiltonian")
    h_max = step_bound(H, gamma0)
    A = -1j * H

    c = c0.copy()
    ref = c0.conj()
    amp = np.empty(times.size, dtype=complex)
    norms = np.empty(times.size)
    amp[0] = ref @ c
    norms[0] = np.linalg.norm(c)
    worst_growth = 0.0
    for i in range(1, times.size):
        dt = times[i] - times[i - 1]
        m = substeps if substeps is not None else max(1, math.ceil(dt / h_max * (1 - 1e-12)))
        step = dt / m
        if step > h_max * (1 + 1e-12):
            raise StepTooLarge(f"step {step:.3e} exceeds bound {h_max:.3e}")
        for _ in range(m):
            k1 = A @ c
            k2 = A @ (c + 0.5 * step * k1)
            k3 = A @ (c + 0.5 * step * k2)
            k4 = A @ (c + step * k3)
            prev = np.linalg.norm(c)
            c = c + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            worst_growth = max(worst_growth, np.linalg.norm(c) - prev)
        amp[i] = ref @ c
        norms[i] = np.linalg.norm(c)
    if worst_growth > 1e-12 * max(1.0, norms[0]):
        raise NumericalFailure(f"state norm grew by {worst_growth:.3e} during integration")
    p_e = np.abs(amp) ** 2
    return SurvivalTrace(times, p_e, time_average(times, p_e, t_star), t_star, norms)


@dataclass(frozen=True)
class TwoModeModel:
    """The two modes carrying the largest normalized weights."""

    delta12: float
    phase: float
    amplitudes: tuple[float, float]
    rates: tuple[float, float]
    indices: tuple[int, int]

    @property
    def period(self) -> float:
        return 2.0 * np.pi / abs(self.delta12)

    def survival(self, times) -> np.ndarray:
        """Two-mode closed form: direct terms plus the interference cross-term."""
        t = np.asarray(times, dtype=float)
        a1, a2 = self.amplitudes
        g1, g2 = self.rates
        return (
            a1**2 * np.exp(-g1 * t)
            + a2**2 * np.exp(-g2 * t)
            + 2.0 * a1 * a2 * np.cos(self.delta12 * t + self.phase) * np.exp(-0.5 * (g1 + g2) * t)
        )


def two_mode_analysis(s: SpectralData, w: ModeWeights) -> TwoModeModel:
    if s.n_modes < 2:
        raise ConfigError("two-mode analysis needs at least two modes")
    # stable sort keeps the spectral ordering among equal weights
    i1, i2 = (int(i) for i in np.argsort(-w.normalized_magnitudes, kind="stable")[:2])
    k1, k2 = s.eigenvalues[i1], s.eigenvalues[i2]
    delta = float(k1.real - k2.real)
    if abs(delta) < 1e-12:
        raise DegenerateSplit("dominant modes share the same Re kappa; period undefined")
    w1, w2 = w.weights[i1], w.weights[i2]
    return TwoModeModel(
        delta12=delta,
        phase=float(np.angle(np.conj(w1) * w2)),
        amplitudes=(float(abs(w1)), float(abs(w2))),
        rates=(float(s.decay_rates[i1]), float(s.decay_rates[i2])),
        indices=(i1, i2),
    )


def count_local_maxima(values) -> int:
    """Strict interior local maxima of a sampled curve."""
    v = np.asarray(values, dtype=float)
    return int(np.count_nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])))
