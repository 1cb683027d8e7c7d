"""Minimum-distance-constrained minimization of the surrogate over in-plane positions.

The design variables are the x, y coordinates of every non-storage atom;
the storage atom and all z coordinates stay fixed. Each pair of atoms
carries one inequality ``|r_j - r_k|^2 >= r_min^2``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from retention.errors import ConfigError, Infeasible, InfeasibleSeed, NumericalFailure, RetentionError
from retention.geometry import AtomArray, min_pair_distance, perturb
from retention.hamiltonian import build_hamiltonian
from retention.spectral import decompose, mode_weights
from retention.surrogate import SurrogateParams, surrogate_cost

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
# solver-side constraint is tightened slightly so SLSQP's own slack lands inside the feasible set
CONSTRAINT_MARGIN = 1e-7
FAILED_COST = 1e6
METHODS = ("SLSQP", "trust-constr")


def evaluate_cost(array: AtomArray, params: SurrogateParams) -> float:
    """Surrogate F of a structure, ``inf`` if the decomposition fails."""
    try:
        h = build_hamiltonian(array)
        s = decompose(h, verify=False)
        w = mode_weights(s, array.initial_state())
        value = surrogate_cost(s, w, params).F
    except (RetentionError, np.linalg.LinAlgError):
        return np.inf
    return value if np.isfinite(value) else np.inf


@dataclass(frozen=True)
class OptimizationProblem:
    seed: AtomArray
    r_min: float
    params: SurrogateParams = SurrogateParams()
    max_iterations: int = 500
    ftol: float = 1e-8
    step_tol: float = 1e-10
    constraint_tol: float = FEASIBILITY_TOL
    fd_step: float = 1e-6
    method: str = "SLSQP"

    def __post_init__(self):
        if not self.r_min > 0:
            raise ConfigError("r_min must be positive")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.seed.n_atoms < 2:
            raise ConfigError("optimization needs at least one movable atom")

    @property
    def movable(self) -> np.ndarray:
        idx = np.arange(self.seed.n_atoms)
        return idx[idx != self.seed.storage_index]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed.to_dict(),
            "r_min": self.r_min,
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "max_iterations": self.max_iterations,
            "ftol": self.ftol,
            "step_tol": self.step_tol,
            "constraint_tol": self.constraint_tol,
            "fd_step": self.fd_step,
            "method": self.method,
        }


@dataclass
class OptimizationResult:
    final: AtomArray
    initial: AtomArray
    F_initial: float
    F_final: float
    cost_trace: list[float]
    feasible: bool
    converged: bool
    iterations_used: int
    seed_id: int | None = None
    restored: bool = False
    message: str = ""
    n_evaluations: int = 0
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "seed_id": self.seed_id,
            "F_initial": self.F_initial,
            "F_final": self.F_final,
            "feasible": self.feasible,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "restored": self.restored,
            "message": self.message,
            "n_evaluations": self.n_evaluations,
            "min_pair_distance": min_pair_distance(self.final),
            "cost_trace": list(self.cost_trace),
            "initial": self.initial.to_dict(),
            "final": self.final.to_dict(),
        }


class _Objective:
    """Caches F per design vector and counts evaluations."""

    def __init__(self, problem: OptimizationProblem):
        self.problem = problem
        self.base = problem.seed.positions.copy()
        self.movable = problem.movable
        self.cache: dict[bytes, float] = {}
        self.n_evals = 0

    def positions(self, x: np.ndarray) -> np.ndarray:
        pos = self.base.copy()
        pos[self.movable, :2] = x.reshape(-1, 2)
        return pos

    def array(self, x: np.ndarray) -> AtomArray:
        return self.problem.seed.with_positions(self.positions(x))

    def raw(self, x: np.ndarray) -> float:
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self.cache:
            self.n_evals += 1
            try:
                arr = self.array(x)
            except RetentionError:
                self.cache[key] = np.inf
            else:
                self.cache[key] = evaluate_cost(arr, self.problem.params)
        return self.cache[key]

    def __call__(self, x: np.ndarray) -> float:
        value = self.raw(x)
        return value if np.isfinite(value) else FAILED_COST

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Central differences; one-sided where a neighbour evaluation fails."""
        h = self.problem.fd_step
        f0 = self.raw(x)
        g = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            fp, fm = self.raw(x + e), self.raw(x - e)
            if np.isfinite(fp) and np.isfinite(fm):
                g[i] = (fp - fm) / (2 * h)
            elif np.isfinite(fp) and np.isfinite(f0):
                g[i] = (fp - f0) / h
            elif np.isfinite(fm) and np.isfinite(f0):
                g[i] = (f0 - fm) / h
        return g


def _pair_constraints(problem: OptimizationProblem, objective: _Objective, r_bound: float):
    n = problem.seed.n_atoms
    iu, ju = np.triu_indices(n, 1)
    col = np.full(n, -1)
    col[problem.movable] = np.arange(problem.movable.size)

    def fun(x):
        pos = objective.positions(x)
        d = pos[iu] - pos[ju]
        return np.einsum("ij,ij->i", d, d) - r_bound**2

    def jac(x):
        pos = objective.positions(x)
        d = pos[iu, :2] - pos[ju, :2]
        J = np.zeros((iu.size, 2 * problem.movable.size))
        rows = np.arange(iu.size)
        for atoms, sign in ((iu, 2.0), (ju, -2.0)):
            c = col[atoms]
            ok = c >= 0
            J[rows[ok], 2 * c[ok]] = sign * d[ok, 0]
            J[rows[ok], 2 * c[ok] + 1] = sign * d[ok, 1]
        return J

    return fun, jac


def _restore(problem: OptimizationProblem, objective: _Objective, x0: np.ndarray) -> np.ndarray:
    """Closest feasible design vector to ``x0`` (least squares under the pair constraints)."""
    fun, jac = _pair_constraints(problem, objective, problem.r_min * (1 + CONSTRAINT_MARGIN))
    res = minimize(
        lambda x: float(np.sum((x - x0) ** 2)),
        x0,
        jac=lambda x: 2 * (x - x0),
        method="SLSQP",
        constraints=[{"type": "ineq", "fun": fun, "jac": jac}],
        options={"maxiter": problem.max_iterations, "ftol": 1e-14},
    )
    x = res.x
    if min_pair_distance(objective.positions(x)) < problem.r_min - problem.constraint_tol:
        raise InfeasibleSeed(f"seed violates r_min = {problem.r_min} and could not be repaired")
    return x


def optimize(problem: OptimizationProblem, seed_id: int | None = None) -> OptimizationResult:
    """Local SQP minimization of F from ``problem.seed``.

    Returns the best feasible point visited (seed included), so
    ``F_final <= F_initial`` always. ``converged`` is set only when the
    solver reports success and its final iterate is feasible.
    """
    t0 = time.perf_counter()
    objective = _Objective(problem)
    x_seed = problem.seed.positions[problem.movable, :2].ravel().copy()
    restored = False
    if min_pair_distance(problem.seed) < problem.r_min - problem.constraint_tol:
        x_seed = _restore(problem, objective, x_seed)
        restored = True
    F0 = objective.raw(x_seed)
    if not np.isfinite(F0):
        raise NumericalFailure("surrogate cannot be evaluated at the seed")

    def feasible(x):
        return min_pair_distance(objective.positions(x)) >= problem.r_min - problem.constraint_tol

    trace = [F0]
    visited = [(F0, 0, x_seed.copy())]

    def callback(xk, *args):
        fk = objective.raw(xk)
        trace.append(fk)
        if np.isfinite(fk) and feasible(xk):
            visited.append((fk, len(trace) - 1, np.array(xk, dtype=float)))

    fun, jac = _pair_constraints(problem, objective, problem.r_min * (1 + CONSTRAINT_MARGIN))
    if problem.method == "SLSQP":
        res = minimize(
            objective,
            x_seed,
            jac=objective.gradient,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": fun, "jac": jac}],
            callback=callback,
            options={"maxiter": problem.max_iterations, "ftol": problem.ftol},
        )
    else:
        from scipy.optimize import NonlinearConstraint

        res = minimize(
            objective,
            x_seed,
            jac=objective.gradient,
            method="trust-constr",
            constraints=[NonlinearConstraint(fun, 0.0, np.inf, jac=jac)],
            callback=lambda xk, state: callback(xk),
            options={"maxiter": problem.max_iterations, "gtol": problem.ftol, "xtol": problem.step_tol},
        )

    x_final = np.asarray(res.x, dtype=float)
    F_final = objective.raw(x_final)
    final_ok = np.isfinite(F_final) and feasible(x_final)
    if final_ok:
        visited.append((F_final, len(trace), x_final))
    best_F, _, best_x = min(visited, key=lambda item: (item[0], item[1]))
    converged = bool(res.success and final_ok)
    message = str(res.message) if converged else f"no_descent: {res.message}"
    final = objective.array(best_x)
    return OptimizationResult(
        final=final,
        initial=objective.array(x_seed),
        F_initial=float(F0),
        F_final=float(best_F),
        cost_trace=[float(v) for v in trace],
        feasible=min_pair_distance(final) >= problem.r_min - problem.constraint_tol,
        converged=converged,
        iterations_used=int(getattr(res, "nit", len(trace) - 1)),
        seed_id=seed_id,
        restored=restored,
        message=message,
        n_evaluations=objective.n_evals,
        wall_time=time.perf_counter() - t0,
    )


def run_seed(master_seed: int, index: int) -> int:
    """64-bit seed of run ``index``; independent of how many runs are requested."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class MultiStartResult:
    master_seed: int
    sigma: float
    results: list[OptimizationResult | None]
    errors: list[str | None]
    run_seeds: list[int]

    @property
    def best_index(self) -> int:
        ok = [(r.F_final, i) for i, r in enumerate(self.results) if r is not None and r.feasible]
        if not ok:
            raise Infeasible("no run ended on a feasible structure")
        return min(ok)[1]

    @property
    def best(self) -> OptimizationResult:
        return self.results[self.best_index]

    @property
    def successful(self) -> list[OptimizationResult]:
        return [r for r in self.results if r is not None]


def _one_run(args) -> tuple[OptimizationResult | None, str | None]:
    problem, sigma, seed = args
    rng = np.random.default_rng(seed)
    try:
        start = perturb(problem.seed, sigma, 0.0, rng)
        return optimize(replace(problem, seed=start), seed_id=seed), None
    except RetentionError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def multi_start(
    problem: OptimizationProblem,
    n_runs: int,
    sigma: float,
    master_seed: int,
    workers: int = 1,
) -> MultiStartResult:
    """Optimize from ``n_runs`` independently xy-perturbed copies of the seed.

    Run ``i`` uses :func:`run_seed` ``(master_seed, i)``, so any prefix of
    runs is reproduced exactly by a shorter call.
    """
    if n_runs < 1:
        raise ConfigError("n_runs must be at least 1")
    seeds = [run_seed(master_seed, i) for i in range(n_runs)]
    jobs = [(problem, sigma, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_one_run, jobs))
    else:
        outcomes = [_one_run(job) for job in jobs]
    results = [r for r, _ in outcomes]
    errors = [e for _, e in outcomes]
    for i, e in enumerate(errors):
        if e:
            log.warning("run %d failed: %s", i, e)
    if all(r is None for r in results):
        if all(e.startswith("InfeasibleSeed") for e in errors):
            raise InfeasibleSeed(f"all {n_runs} seeds infeasible; first error: {errors[0]}")
        raise NumericalFailure(f"all {n_runs} runs failed; first error: {errors[0]}")
    return MultiStartResult(master_seed, sigma, results, errors, seeds)
