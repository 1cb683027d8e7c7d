"""Ensemble studies: positional robustness, surrogate-vs-retention correlation, seed dependence."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from retention.dynamics import T_STAR, default_times, survival_modesum
from retention.errors import ConfigError, RetentionError
from retention.geometry import AtomArray, perturb
from retention.hamiltonian import build_hamiltonian
from retention.optimizer import MultiStartResult, OptimizationProblem, multi_start, run_seed
from retention.spectral import decompose, mode_weights
from retention.surrogate import SurrogateParams, surrogate_cost

log = logging.getLogger(__name__)

CLUSTER_THRESHOLD = 0.02


def pearson(x, y) -> float:
    """Centered-product Pearson coefficient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ConfigError("pearson needs two equally long samples of size >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    return float(dx @ dy / denom) if denom > 0 else math.nan


def pearson_direct(x, y) -> float:
    """Raw-moment Pearson coefficient from compensated sums (independent route)."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    sx, sy = math.fsum(x), math.fsum(y)
    sxx = math.fsum(v * v for v in x)
    syy = math.fsum(v * v for v in y)
    sxy = math.fsum(a * b for a, b in zip(x, y))
    denom = math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))
    return (n * sxy - sx * sy) / denom if denom > 0 else math.nan


@dataclass(frozen=True)
class StructureMetrics:
    F: float
    min_rate: float
    p_final: float
    p_bar: float
    largest_weight: float
    largest_rate: float


def structure_metrics(
    array: AtomArray,
    params: SurrogateParams = SurrogateParams(),
    times=None,
    t_star: float = T_STAR,
) -> tuple[StructureMetrics, np.ndarray]:
    """Spectral and time-domain figures of merit plus the survival curve."""
    s = decompose(build_hamiltonian(array))
    w = mode_weights(s, array.initial_state())
    times = default_times(t_star, gamma0=array.gamma0) if times is None else times
    trace = survival_modesum(s, w, times, t_star)
    ell = w.largest
    metrics = StructureMetrics(
        F=surrogate_cost(s, w, params).F,
        min_rate=float(s.decay_rates.min() / s.gamma0),
        p_final=trace.at(t_star),
        p_bar=trace.p_bar,
        largest_weight=float(abs(w.weights[ell])),
        largest_rate=float(s.decay_rates[ell] / s.gamma0),
    )
    return metrics, trace.p_e


@dataclass
class EnsembleSummary:
    times: np.ndarray
    reference: np.ndarray
    median: np.ndarray
    p10: np.ndarray
    p90: np.ndarray
    n_trials: int
    n_failed: int
    sigma_xy: float
    sigma_z: float
    master_seed: int

    def max_median_deviation(self) -> float:
        """Largest relative gap between the ensemble median and the unperturbed trace."""
        return float(np.max(np.abs(self.median - self.reference) / np.abs(self.reference)))

    def ordered(self) -> bool:
        return bool(np.all(self.p10 <= self.median) and np.all(self.median <= self.p90))

    def rows(self) -> list[list[float]]:
        return [list(map(float, r)) for r in zip(self.times, self.p10, self.median, self.p90, self.reference)]


def robustness_ensemble(
    base: AtomArray,
    sigma_xy: float,
    sigma_z: float,
    n_trials: int,
    master_seed: int,
    times=None,
    include_storage: bool = True,
) -> EnsembleSummary:
    """Median and 10-90 percentile band of p_e(t) under Gaussian position noise."""
    if n_trials < 2:
        raise ConfigError("robustness ensemble needs at least two trials")
    times = default_times(gamma0=base.gamma0) if times is None else np.asarray(times, dtype=float)
    _, reference = structure_metrics(base, times=times, t_star=float(times[-1]))
    curves, failed = [], 0
    for i in range(n_trials):
        rng = np.random.default_rng(run_seed(master_seed, i))
        try:
            arr = perturb(base, sigma_xy, sigma_z, rng, include_storage=include_storage)
            s = decompose(build_hamiltonian(arr))
            w = mode_weights(s, arr.initial_state())
            curves.append(survival_modesum(s, w, times).p_e)
        except RetentionError as exc:
            failed += 1
            log.warning("trial %d excluded: %s", i, exc)
    if len(curves) < 2:
        raise RetentionError("fewer than two usable trials")
    stack = np.vstack(curves)
    p10, med, p90 = np.percentile(stack, [10, 50, 90], axis=0)
    return EnsembleSummary(times, reference, med, p10, p90, n_trials, failed, sigma_xy, sigma_z, master_seed)


CORRELATION_PAIRS = [("F", "p_final"), ("F", "p_bar"), ("min_rate", "p_final"), ("min_rate", "p_bar")]


@dataclass
class CorrelationReport:
    metrics: list[StructureMetrics]
    correlations: dict[tuple[str, str], float]
    n_failed: int = 0
    master_seed: int = 0
    sigma: float = 0.0

    @property
    def sample_size(self) -> int:
        return len(self.metrics)

    @property
    def time_average_stronger(self) -> bool:
        """Whether F tracks the time-averaged metric better than the single-time one."""
        return self.correlations[("F", "p_bar")] < self.correlations[("F", "p_final")]

    def rows(self) -> list[list[float]]:
        return [[i, m.F, m.min_rate, m.p_final, m.p_bar] for i, m in enumerate(self.metrics)]


def correlation_study(
    base: AtomArray,
    sigma: float,
    n_structures: int,
    master_seed: int,
    t_star: float = T_STAR,
    params: SurrogateParams = SurrogateParams(),
    include_storage: bool = True,
    in_plane_only: bool = False,
) -> CorrelationReport:
    """Pearson coefficients between objectives (F, min rate) and retention metrics.

    Candidates are Gaussian perturbations of ``base`` with per-axis width
    ``sigma`` on x, y and z (z untouched when ``in_plane_only``).
    """
    if n_structures < 3:
        raise ConfigError("correlation study needs at least three structures")
    rows, failed = [], 0
    times = default_times(t_star, gamma0=base.gamma0)
    for i in range(n_structures):
        rng = np.random.default_rng(run_seed(master_seed, i))
        try:
            arr = perturb(base, sigma, 0.0 if in_plane_only else sigma, rng, include_storage=include_storage)
            m, _ = structure_metrics(arr, params, times, t_star)
            rows.append(m)
        except RetentionError as exc:
            failed += 1
            log.warning("structure %d excluded: %s", i, exc)
    if len(rows) < 3:
        raise RetentionError("fewer than three usable structures")
    corr = {
        (a, b): pearson([getattr(m, a) for m in rows], [getattr(m, b) for m in rows])
        for a, b in CORRELATION_PAIRS
    }
    return CorrelationReport(rows, corr, failed, master_seed, sigma)


def _relative_xy(array: AtomArray) -> tuple[np.ndarray, np.ndarray]:
    mask = np.arange(array.n_atoms) != array.storage_index
    rel = array.positions[mask] - array.positions[array.storage_index]
    return rel[:, :2], rel[:, 2]


def structure_distance(a: AtomArray, b: AtomArray, n_angles: int = 72, refine: int = 4) -> float:
    """Mean per-atom distance after the best rotation of ``b`` about z through the storage atom.

    Atom correspondence is re-solved (optimal assignment) for each trial
    angle, and the angle is then refined with the closed-form 2D Procrustes
    update.
    """
    xa, za = _relative_xy(a)
    xb, zb = _relative_xy(b)
    if xa.shape != xb.shape:
        raise ConfigError("structures have different atom counts")
    pa = np.column_stack([xa, za])

    def rotated(theta):
        c, s = np.cos(theta), np.sin(theta)
        return np.column_stack([c * xb[:, 0] - s * xb[:, 1], s * xb[:, 0] + c * xb[:, 1], zb])

    def assign(theta):
        pb = rotated(theta)
        cost = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
        rows, cols = linear_sum_assignment(cost)
        return cols, float(cost[rows, cols].mean())

    best = math.inf
    for theta in 2 * np.pi * np.arange(n_angles) / n_angles:
        cols, value = assign(theta)
        for _ in range(refine):
            q = xb[cols]
            theta = math.atan2(
                float(np.sum(q[:, 0] * xa[:, 1] - q[:, 1] * xa[:, 0])),
                float(np.sum(q[:, 0] * xa[:, 0] + q[:, 1] * xa[:, 1])),
            )
            cols, value2 = assign(theta)
            if value2 >= value - 1e-15:
                value = min(value, value2)
                break
            value = value2
        best = min(best, value)
    return best


def cluster_structures(
    arrays: list[AtomArray], costs: list[float], threshold: float = CLUSTER_THRESHOLD
) -> list[list[int]]:
    """Greedy clustering in order of increasing cost; each cluster keyed by its lowest-cost member."""
    order = sorted(range(len(arrays)), key=lambda i: (costs[i], i))
    clusters: list[list[int]] = []
    for i in order:
        for members in clusters:
            if structure_distance(arrays[members[0]], arrays[i]) <= threshold:
                members.append(i)
                break
        else:
            clusters.append([i])
    return clusters


@dataclass
class SeedDependenceReport:
    runs: MultiStartResult
    run_ids: list[int]
    metrics: list[StructureMetrics]
    clusters: list[list[int]] = field(default_factory=list)
    threshold: float = CLUSTER_THRESHOLD

    @property
    def modal_cluster(self) -> list[int]:
        """Largest cluster; ties go to the one with the lower best cost (earlier in the list)."""
        return max(self.clusters, key=len)

    @property
    def most_frequent(self) -> AtomArray:
        return self.runs.results[self.modal_cluster[0]].final

    def rows(self) -> list[list[float]]:
        return [[i, m.largest_weight, m.largest_rate, m.F] for i, m in zip(self.run_ids, self.metrics)]


def seed_dependence_study(
    problem: OptimizationProblem,
    n_runs: int,
    sigma: float,
    master_seed: int,
    workers: int = 1,
    threshold: float = CLUSTER_THRESHOLD,
) -> SeedDependenceReport:
    """Distribution of (|w_max|, Gamma_max, F) over a multi-start batch and its modal structure."""
    if n_runs < 2:
        raise ConfigError("seed-dependence study needs at least two runs")
    runs = multi_start(problem, n_runs, sigma, master_seed, workers=workers)
    return summarize_runs(runs, problem.params, threshold)


def summarize_runs(
    runs: MultiStartResult, params: SurrogateParams = SurrogateParams(), threshold: float = CLUSTER_THRESHOLD
) -> SeedDependenceReport:
    ids, metrics = [], []
    for i, r in enumerate(runs.results):
        if r is None:
            continue
        m, _ = structure_metrics(r.final, params)
        ids.append(i)
        metrics.append(m)
    clusters_local = cluster_structures([runs.results[i].final for i in ids], [m.F for m in metrics], threshold)
    clusters = [[ids[j] for j in c] for c in clusters_local]
    return SeedDependenceReport(runs, ids, metrics, clusters, threshold)
