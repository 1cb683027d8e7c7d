import numpy as np
import pytest

from retention import optimizer as opt
from retention.errors import ConfigError, Infeasible, InfeasibleSeed, NumericalFailure
from retention.geometry import AtomArray, GeometrySpec, make_ring, min_pair_distance
from retention.optimizer import OptimizationProblem, evaluate_cost, multi_start, optimize, run_seed
from retention.surrogate import SurrogateParams

PARAMS = SurrogateParams()


def pair(d):
    return AtomArray([[0, 0, 0], [d, 0, 0]])


@pytest.fixture(scope="module")
def small_ring():
    return make_ring(GeometrySpec("ring", 4, 0.3))


class TestTwoAtoms:
    def test_cost_increases_with_distance(self):
        costs = [evaluate_cost(pair(d), PARAMS) for d in (0.1, 0.15, 0.2, 0.3)]
        assert np.all(np.diff(costs) > 0)

    def test_optimum_at_seed(self):
        res = optimize(OptimizationProblem(pair(0.1), r_min=0.1))
        assert res.feasible
        assert res.F_final == res.F_initial
        assert np.array_equal(res.final.positions, pair(0.1).positions)

    def test_moves_to_boundary(self):
        res = optimize(OptimizationProblem(pair(0.3), r_min=0.1))
        assert res.feasible and res.converged
        assert min_pair_distance(res.final) == pytest.approx(0.1, rel=1e-5)
        assert res.F_final == pytest.approx(evaluate_cost(pair(0.1), PARAMS), abs=1e-4)


class TestInvariants:
    def test_ring(self, small_ring):
        seed = small_ring.with_positions(small_ring.positions + np.array([0, 0, 0.0]) * 0)
        res = optimize(OptimizationProblem(seed, r_min=0.1, max_iterations=100))
        assert res.feasible
        assert res.F_final <= res.F_initial
        assert min_pair_distance(res.final) >= 0.1 - 1e-9
        assert np.array_equal(res.final.positions[0], seed.positions[0])
        assert np.array_equal(res.final.positions[:, 2], seed.positions[:, 2])
        assert res.cost_trace[0] == res.F_initial

    def test_z_untouched_out_of_plane(self, small_ring):
        pos = small_ring.positions.copy()
        pos[1:, 2] = [0.01, -0.02, 0.03, 0.0]
        seed = small_ring.with_positions(pos)
        res = optimize(OptimizationProblem(seed, r_min=0.1, max_iterations=50))
        assert np.array_equal(res.final.positions[:, 2], pos[:, 2])

    def test_trust_constr(self, small_ring):
        res = optimize(OptimizationProblem(small_ring, r_min=0.1, max_iterations=30, method="trust-constr"))
        assert res.feasible and res.F_final <= res.F_initial

    def test_serialization(self, small_ring):
        prob = OptimizationProblem(small_ring, r_min=0.1, max_iterations=5)
        d = optimize(prob).to_dict()
        assert d["feasible"] and d["min_pair_distance"] >= 0.1 - 1e-9
        assert prob.to_dict()["r_min"] == 0.1


class TestErrors:
    def test_problem_validation(self, small_ring):
        with pytest.raises(ConfigError):
            OptimizationProblem(small_ring, r_min=0.0)
        with pytest.raises(ConfigError):
            OptimizationProblem(small_ring, r_min=0.1, method="nelder-mead")
        with pytest.raises(ConfigError):
            OptimizationProblem(AtomArray([[0, 0, 0]]), r_min=0.1)

    def test_restoration(self):
        res = optimize(OptimizationProblem(pair(0.05), r_min=0.1))
        assert res.restored and res.feasible
        assert min_pair_distance(res.final) >= 0.1 - 1e-9

    def test_unrepairable_seed(self, monkeypatch):
        monkeypatch.setattr(opt, "minimize", lambda fun, x0, **kw: type("R", (), {"x": x0})())
        with pytest.raises(InfeasibleSeed):
            optimize(OptimizationProblem(pair(0.05), r_min=0.1))

    def test_failed_evaluation_is_infinite(self, monkeypatch):
        def boom(*a, **k):
            raise NumericalFailure("forced")

        monkeypatch.setattr(opt, "decompose", boom)
        assert evaluate_cost(pair(0.2), PARAMS) == np.inf


class TestMultiStart:
    def test_single_unperturbed_equals_optimize(self, small_ring):
        prob = OptimizationProblem(small_ring, r_min=0.1, max_iterations=40)
        ms = multi_start(prob, 1, 0.0, master_seed=3)
        ref = optimize(prob)
        assert ms.best.F_final == ref.F_final
        assert np.array_equal(ms.best.final.positions, ref.final.positions)

    def test_prefix_property(self, small_ring):
        prob = OptimizationProblem(small_ring, r_min=0.1, max_iterations=40)
        short = multi_start(prob, 2, 0.01, master_seed=9)
        long = multi_start(prob, 3, 0.01, master_seed=9)
        assert short.run_seeds == long.run_seeds[:2]
        assert [r.F_final for r in short.results] == [r.F_final for r in long.results[:2]]
        assert long.best.F_final <= short.best.F_final

    def test_parallel_matches_serial(self, small_ring):
        prob = OptimizationProblem(small_ring, r_min=0.1, max_iterations=20)
        a = multi_start(prob, 2, 0.01, master_seed=4, workers=1)
        b = multi_start(prob, 2, 0.01, master_seed=4, workers=2)
        assert [r.F_final for r in a.results] == [r.F_final for r in b.results]

    def test_all_seeds_infeasible(self, monkeypatch, small_ring):
        def bad(problem, seed_id=None):
            raise InfeasibleSeed("forced")

        monkeypatch.setattr(opt, "optimize", bad)
        with pytest.raises(InfeasibleSeed):
            multi_start(OptimizationProblem(small_ring, r_min=0.1), 2, 0.01, master_seed=1)

    def test_no_feasible_best(self, small_ring):
        prob = OptimizationProblem(small_ring, r_min=0.1, max_iterations=5)
        ms = multi_start(prob, 1, 0.0, master_seed=1)
        ms.results[0].feasible = False
        with pytest.raises(Infeasible):
            ms.best_index

    def test_rejects_zero_runs(self, small_ring):
        with pytest.raises(ConfigError):
            multi_start(OptimizationProblem(small_ring, r_min=0.1), 0, 0.01, 1)

    def test_run_seed_stable(self):
        assert run_seed(2024, 5) == run_seed(2024, 5)
        assert run_seed(2024, 5) != run_seed(2024, 6)
        assert 0 <= run_seed(1, 0) < 2**64
