"""Command-line entry point: ``retention <command> --config cfg.json --out dir``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 infeasible optimization.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from retention import __version__
from retention.analysis import correlation_study, robustness_ensemble, seed_dependence_study
from retention.config import COMMANDS, build_array, load_config_file, resolve
from retention.dynamics import count_local_maxima, default_times, survival_modesum, survival_ode, two_mode_analysis
from retention.errors import ConfigError, DegenerateSplit, Infeasible, RetentionError
from retention.farfield import gamma_pattern_table, integrated_pattern
from retention.geometry import min_pair_distance
from retention.hamiltonian import build_hamiltonian
from retention.optimizer import FEASIBILITY_TOL, OptimizationProblem, multi_start
from retention.outputs import OutputDir
from retention.spectral import MODE_COLUMNS, decompose, mode_weights, modes_table, residuals
from retention.surrogate import SurrogateParams, surrogate_cost

log = logging.getLogger("retention")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INFEASIBLE = 0, 2, 3, 4


def _spectrum_of(array):
    s = decompose(build_hamiltonian(array))
    return s, mode_weights(s, array.initial_state())


def _times(cfg: dict, gamma0: float) -> np.ndarray:
    return default_times(cfg["time"]["t_end"], int(cfg["time"]["samples"]), gamma0)


def _problem(cfg: dict, array) -> OptimizationProblem:
    o = cfg["optimizer"]
    return OptimizationProblem(
        seed=array,
        r_min=float(o["r_min"]),
        params=SurrogateParams(**cfg["surrogate"]),
        max_iterations=int(o["max_iterations"]),
        ftol=float(o["ftol"]),
        step_tol=float(o["step_tol"]),
        constraint_tol=float(o["constraint_tol"]),
        fd_step=float(o["fd_step"]),
        method=o["method"],
    )


def cmd_spectrum(cfg: dict, out: OutputDir, threads: int = 1) -> dict:
    array = build_array(cfg["geometry"])
    h = build_hamiltonian(array)
    s = decompose(h)
    w = mode_weights(s, array.initial_state())
    res = residuals(h, s)
    out.json("structure.json", array.to_dict())
    out.csv("modes.csv", MODE_COLUMNS, modes_table(s, w))
    out.csv("residuals.csv", ["mode", "right", "left"], [[i, *r] for i, r in enumerate(res)])
    ell = w.largest
    return {
        "n_atoms": array.n_atoms,
        "largest_mode": ell,
        "largest_abs_w_sq": float(abs(w.weights[ell]) ** 2),
        "largest_gamma_over_gamma0": float(s.decay_rates[ell] / s.gamma0),
        "F": surrogate_cost(s, w, SurrogateParams(**cfg["surrogate"])).F,
        "max_residual": float(res.max()),
        "weight_sum_error": float(abs(w.weights.sum() - 1.0)),
        "biorthogonality_error": s.biorthogonality_error(),
        "completeness_error": s.completeness_error(),
    }


def cmd_dynamics(cfg: dict, out: OutputDir, threads: int = 1) -> dict:
    array = build_array(cfg["geometry"])
    h = build_hamiltonian(array)
    s = decompose(h)
    w = mode_weights(s, array.initial_state())
    times = _times(cfg, array.gamma0)
    t_star = float(cfg["t_star"])
    trace = survival_modesum(s, w, times, t_star)
    header, cols = ["t", "p_e"], [times, trace.p_e]
    report = {"p_bar": trace.p_bar, "p_final": trace.at(t_star), "local_maxima": count_local_maxima(trace.p_e)}
    if cfg["dynamics"]["ode"]:
        ode = survival_ode(h, array.initial_state(), times, t_star, cfg["dynamics"]["ode_substeps"])
        header.append("p_e_ode")
        cols.append(ode.p_e)
        report["max_modesum_ode_diff"] = float(np.max(np.abs(ode.p_e - trace.p_e)))
    if s.n_modes >= 2:
        try:
            tm = two_mode_analysis(s, w)
            report.update(delta12=tm.delta12, period=tm.period, dominant_modes=list(tm.indices))
        except DegenerateSplit as exc:
            report["two_mode"] = str(exc)
    out.csv("survival.csv", header, zip(*cols))
    out.json("summary.json", report)
    return report


def cmd_optimize(cfg: dict, out: OutputDir, threads: int = 1) -> dict:
    array = build_array(cfg["geometry"])
    problem = _problem(cfg, array)
    o = cfg["optimizer"]
    ms = multi_start(problem, int(o["n_runs"]), float(o["sigma"]), cfg["seed"], workers=threads)
    t_star = float(cfg["t_star"])
    times = default_times(t_star, gamma0=array.gamma0)
    rows, structures = [], []
    for i, (r, err) in enumerate(zip(ms.results, ms.errors)):
        if r is None:
            rows.append([i, ms.run_seeds[i], "", "", False, False, 0, "", "", "", "", err])
            continue
        dmin = min_pair_distance(r.final)
        # audit every emitted structure independently of the optimizer's own flag
        feasible = dmin >= problem.r_min - FEASIBILITY_TOL
        s, w = _spectrum_of(r.final)
        ell = w.largest
        p_final = survival_modesum(s, w, times, t_star).at(t_star)
        rows.append(
            [i, ms.run_seeds[i], r.F_initial, r.F_final, feasible, r.converged, r.iterations_used, dmin,
             abs(w.weights[ell]) ** 2, s.decay_rates[ell] / s.gamma0, p_final, r.message]
        )
        structures.append({"run": i, "structure": r.final.to_dict()})
    out.csv(
        "runs.csv",
        ["run", "run_seed", "F_initial", "F_final", "feasible", "converged", "iterations", "min_pair_distance",
         "abs_w_sq", "gamma_over_gamma0", "p_final", "message"],
        rows,
    )
    out.json("structures.json", structures)
    best = ms.best
    if min_pair_distance(best.final) < problem.r_min - FEASIBILITY_TOL:
        raise Infeasible("best structure violates the minimum-distance constraint")
    s, w = _spectrum_of(best.final)
    out.json("best_structure.json", {"run": ms.best_index, "structure": best.final.to_dict()})
    out.csv("best_modes.csv", MODE_COLUMNS, modes_table(s, w))
    out.csv("best_cost_trace.csv", ["iteration", "F"], enumerate(best.cost_trace))
    best_row = rows[ms.best_index]
    return {
        "best_run": ms.best_index,
        "F_seed": surrogate_cost(*_spectrum_of(array), problem.params).F,
        "F_best": best.F_final,
        "p_final_best": best_row[10],
        "abs_w_sq_best": best_row[8],
        "failed_runs": sum(r is None for r in ms.results),
        "infeasible_runs": sum(1 for row in rows if row[4] is False),
    }


def cmd_farfield(cfg: dict, out: OutputDir, threads: int = 1) -> dict:
    array = build_array(cfg["geometry"])
    s, w = _spectrum_of(array)
    f = cfg["farfield"]
    order = int(f["order"])
    table = gamma_pattern_table(array, s, order)
    out.csv("gamma_pattern.csv", ["mode", "gamma_over_gamma0", "P", "error"], [[int(r[0]), *r[1:]] for r in table])
    refine = []
    for q in f["refine_orders"]:
        t = gamma_pattern_table(array, s, int(q))
        refine.append([int(q), float(t[:, 3].max()), float(np.max(np.abs(t[:, 2] - table[:, 2])))])
    out.csv("quadrature_refinement.csv", ["order", "max_error", "max_abs_P_change"], refine)
    pm = f["pattern_modes"]
    modes = [w.largest] if pm == "largest" else list(range(s.n_modes)) if pm == "all" else pm
    for k in modes:
        if not 0 <= k < s.n_modes:
            raise ConfigError(f"pattern mode {k} out of range")
        vec = s.right_vecs[:, k] / np.linalg.norm(s.right_vecs[:, k])
        pat = integrated_pattern(array, vec, order)
        out.text(f"pattern_mode_{k}.csv", pat.to_csv())
    return {"max_error": float(table[:, 3].max()), "order": order, "pattern_modes": modes}


def cmd_study(cfg: dict, out: OutputDir, threads: int = 1) -> dict:
    array = build_array(cfg["geometry"])
    st = cfg["study"]
    kind = st["kind"]
    params = SurrogateParams(**cfg["surrogate"])
    if kind == "robustness":
        times = _times(cfg, array.gamma0)
        ens = robustness_ensemble(
            array, float(st["sigma_xy"]), float(st["sigma_z"]), int(st["n_trials"]), cfg["seed"], times,
            include_storage=bool(st["include_storage"]),
        )
        out.csv("ensemble.csv", ["t", "p10", "p50", "p90", "reference"], ens.rows())
        with np.errstate(divide="ignore", invalid="ignore"):
            dev = ens.max_median_deviation()
        return {"n_trials": ens.n_trials, "n_failed": ens.n_failed, "ordered": ens.ordered(), "max_median_deviation": dev}
    if kind == "correlation":
        rep = correlation_study(
            array, float(st["sigma"]), int(st["n_structures"]), cfg["seed"], float(cfg["t_star"]), params,
            include_storage=bool(st["include_storage"]), in_plane_only=bool(st["in_plane_only"]),
        )
        out.csv("correlation.csv", ["structure", "F", "min_gamma_over_gamma0", "p_final", "p_bar"], rep.rows())
        out.csv("correlation_summary.csv", ["objective", "metric", "pearson_r"], [[a, b, r] for (a, b), r in rep.correlations.items()])
        if not rep.time_average_stronger:
            log.warning("F correlates more strongly with p_e(t*) than with its time average on this ensemble")
        return {
            "sample_size": rep.sample_size,
            "n_failed": rep.n_failed,
            "time_average_stronger": rep.time_average_stronger,
            "correlations": {f"{a}~{b}": r for (a, b), r in rep.correlations.items()},
        }
    problem = _problem(cfg, array)
    o = cfg["optimizer"]
    rep = seed_dependence_study(problem, int(o["n_runs"]), float(o["sigma"]), cfg["seed"], threads, float(st["cluster_threshold"]))
    out.csv("seed_dependence.csv", ["run", "abs_w", "gamma_over_gamma0", "F"], rep.rows())
    out.csv(
        "clusters.csv",
        ["cluster", "size", "representative_run", "F_representative"],
        [[c, len(m), m[0], rep.runs.results[m[0]].F_final] for c, m in enumerate(rep.clusters)],
    )
    out.json("modal_structure.json", {"run": rep.modal_cluster[0], "structure": rep.most_frequent.to_dict()})
    return {
        "n_runs": len(rep.run_ids),
        "n_clusters": len(rep.clusters),
        "modal_cluster_size": len(rep.modal_cluster),
        "clustering": f"greedy, threshold {rep.threshold} on mean per-atom distance after best rotation about z",
    }


HANDLERS = {
    "spectrum": cmd_spectrum,
    "dynamics": cmd_dynamics,
    "optimize": cmd_optimize,
    "farfield": cmd_farfield,
    "study": cmd_study,
}


def _seed_arg(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retention", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.replace("cmd_", "") + " run")
        p.add_argument("--config", required=True, help="config JSON or a previous run's manifest.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=_seed_arg, default=None, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for multi-start work")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def run(command: str, config_path, out_dir, seed: int | None = None, threads: int = 1) -> dict:
    """Resolve the config, execute ``command`` and write outputs plus the manifest."""
    if threads < 1:
        raise ConfigError("--threads must be at least 1")
    raw = load_config_file(config_path)
    cfg = resolve(command, raw, seed, base_dir=Path(config_path).resolve().parent)
    out = OutputDir(out_dir)
    t0 = time.perf_counter()
    report = HANDLERS[command](cfg, out, threads)
    log.info("%s finished in %.2f s", command, time.perf_counter() - t0)
    out.manifest(command, cfg, __version__, report)
    return report


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        report = run(args.command, args.config, args.out, args.seed, args.threads)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RetentionError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for key, value in report.items():
        print(f"{key}: {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
