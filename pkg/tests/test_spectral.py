import numpy as np
import pytest
from scipy.stats import ortho_group

from retention.errors import ConfigError, DefectiveMatrix, NumericalFailure
from retention.geometry import GeometrySpec, make_geometry, reference_structure
from retention.hamiltonian import EffectiveHamiltonian, build_hamiltonian
from retention.spectral import MODE_COLUMNS, decompose, mode_weights, modes_csv, residuals


def random_complex_symmetric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A + A.T


def unit_state(n, rng):
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def test_single_mode():
    s = decompose(np.array([[-0.5j]]))
    assert s.eigenvalues[0] == pytest.approx(-0.5j)
    assert s.decay_rates[0] == pytest.approx(1.0)
    w = mode_weights(s, [1.0])
    assert w.weights[0] == pytest.approx(1.0)


def test_reconstruction_random():
    H = random_complex_symmetric(8, 0)
    s = decompose(H)
    assert np.abs(s.reconstruct() - H).max() <= 1e-10
    assert s.biorthogonality_error() <= 1e-10
    assert s.completeness_error() <= 1e-10


def test_left_vectors_are_conjugates():
    H = random_complex_symmetric(10, 1)
    s = decompose(H)
    assert np.array_equal(s.left_vecs, s.right_vecs.conj())
    assert np.allclose(s.norms, np.einsum("il,il->l", s.left_vecs.conj(), s.right_vecs), atol=1e-10)
    assert s.verification["eigenvalue_mismatch"] <= 1e-8 * np.linalg.norm(H)
    assert s.verification["left_misalignment"] <= 1e-8


def test_diagonal_residuals_zero():
    H = np.diag([1 - 0.1j, 2 - 0.3j, -1 - 0.2j])
    s = decompose(H)
    assert np.all(residuals(H, s) == 0)


def test_corrupted_vector_detected():
    H = random_complex_symmetric(8, 2)
    s = decompose(H)
    bad = s.right_vecs.copy()
    bad[:, 3] += 1e-3 * np.random.default_rng(0).normal(size=8)
    corrupted = type(s)(s.eigenvalues, bad, s.left_vecs, s.norms, s.decay_rates)
    res = residuals(H, corrupted)
    assert 1e-5 < res[3, 0] < 1e-2
    assert res[np.arange(8) != 3, 0].max() < 1e-13


def test_ordering_contract():
    arr = make_geometry(GeometrySpec("ring", 10, 0.25))
    s = decompose(build_hamiltonian(arr))
    g, re = s.decay_rates, s.eigenvalues.real
    for i in range(len(g) - 1):
        assert g[i] < g[i + 1] or (g[i] == g[i + 1] and re[i] <= re[i + 1])


def test_degenerate_ring_modes_biorthogonal():
    # the ring's rotational symmetry produces exactly paired eigenvalues
    s = decompose(build_hamiltonian(reference_structure("ring", 12, 0.1)))
    assert s.biorthogonality_error() <= 1e-10
    assert s.completeness_error() <= 1e-10


def test_exact_degeneracy():
    H = np.diag([1.0 - 0.5j, 1.0 - 0.5j, 2.0 - 0.1j])
    Q = ortho_group.rvs(3, random_state=4)
    s = decompose(Q @ H @ Q.T)
    assert s.biorthogonality_error() <= 1e-12


def test_defective_raises():
    # nilpotent complex symmetric matrix: a single Jordan block
    with pytest.raises(DefectiveMatrix):
        decompose(np.array([[1.0, 1j], [1j, -1.0]]))


def test_gain_rejected():
    H = np.diag([0.0 + 0.5j, -0.5j])
    h = EffectiveHamiltonian(J=np.zeros((2, 2)), Gamma=np.diag([-1.0, 1.0]), H=H)
    with pytest.raises(NumericalFailure):
        decompose(h)


def test_rejects_bad_input():
    with pytest.raises(ConfigError):
        decompose(np.zeros((2, 3)))
    with pytest.raises(ConfigError):
        decompose(np.array([[np.nan]]))


class TestWeights:
    def test_normal_matrix_eigenstate(self):
        Q = ortho_group.rvs(6, random_state=7)
        kappa = np.array([1, 2, 3, 4, 5, 6]) - 0.1j * np.arange(1, 7)
        H = Q @ np.diag(kappa) @ Q.T
        s = decompose(H)
        target = int(np.argmin(np.abs(s.eigenvalues - kappa[2])))
        w = mode_weights(s, Q[:, 2])
        expected = np.zeros(6)
        expected[target] = 1
        assert np.allclose(w.weights, expected, atol=1e-12)

    def test_sum_rule_random_states(self):
        H = random_complex_symmetric(12, 3)
        s = decompose(H)
        rng = np.random.default_rng(8)
        for _ in range(50):
            w = mode_weights(s, unit_state(12, rng))
            assert abs(w.weights.sum() - 1) <= 1e-10
            assert np.all(w.normalized_magnitudes >= 0)
            assert w.normalized_magnitudes.sum() == pytest.approx(1, abs=1e-12)

    def test_rejects_unnormalized(self):
        s = decompose(random_complex_symmetric(3, 0))
        with pytest.raises(ConfigError):
            mode_weights(s, [1.0, 1.0, 0.0])
        with pytest.raises(ConfigError):
            mode_weights(s, [1.0, 0.0])

    def test_table(self):
        s = decompose(build_hamiltonian(reference_structure("ring", 4, 0.2)))
        w = mode_weights(s, np.eye(5)[0])
        lines = modes_csv(s, w).splitlines()
        assert lines[0].split(",") == MODE_COLUMNS
        assert len(lines) == 6
