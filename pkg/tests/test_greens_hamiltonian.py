import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import spherical_jn, spherical_yn

from retention.errors import ConfigError
from retention.geometry import DIPOLE_CIRCULAR, DIPOLE_Z, AtomArray, GeometrySpec, make_ring, make_sunflower
from retention.greens import far_field_projector, green_coefficients, green_tensor, green_tensor_closed_form
from retention.hamiltonian import build_hamiltonian, coupling_matrices

K = 2 * np.pi

unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3).map(
    lambda v: np.array(v) / np.linalg.norm(v)
)


def random_dipole(rng):
    d = rng.normal(size=3) + 1j * rng.normal(size=3)
    return d / np.linalg.norm(d)


class TestGreens:
    @pytest.mark.parametrize("dist", [1e-3, 0.05, 0.3, 0.49 / K, 0.51 / K, 1.0, 2.0, 7.3])
    def test_matches_closed_form(self, dist):
        r = dist * np.array([0.48, -0.6, 0.64])
        G = green_tensor(r)
        ref = green_tensor_closed_form(r)
        assert np.allclose(G, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())

    @pytest.mark.parametrize("dist", [1e-4, 0.01, 0.07, 0.3, 1.5])
    def test_coefficients_match_scipy_bessel(self, dist):
        x = K * dist
        h0 = spherical_jn(0, x) + 1j * spherical_yn(0, x)
        h2 = spherical_jn(2, x) + 1j * spherical_yn(2, x)
        c_iso, c_rr = green_coefficients(dist, K)
        pref = 1j * K / (4 * np.pi)
        assert c_iso == pytest.approx(pref * (2 * h0 - h2) / 3, rel=1e-10)
        assert c_rr == pytest.approx(pref * h2, rel=1e-10)

    def test_im_small_separation(self):
        G = green_tensor([1e-4, 0, 0])
        assert np.allclose(np.diag(G.imag), K / (6 * np.pi), rtol=1e-6)

    def test_im_limit_sequence(self):
        target = K / (6 * np.pi)
        errs = [abs(green_tensor([0, 0, d]).imag[0, 0] - target) for d in (1e-1, 1e-2, 1e-3)]
        assert errs[0] > errs[1] > errs[2]

    def test_self_decay_consistency(self):
        rng = np.random.default_rng(0)
        im0 = green_tensor([1e-7, 0, 0]).imag
        for _ in range(5):
            d = random_dipole(rng)
            val = 6 * np.pi / K * np.vdot(d, im0 @ d).real
            assert val == pytest.approx(1.0, rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(direction=unit_vectors, dist=st.floats(0.01, 3.0))
    def test_symmetry(self, direction, dist):
        r = dist * direction
        G = green_tensor(r)
        assert np.allclose(G, G.T, rtol=0, atol=1e-12 * np.abs(G).max())
        assert np.allclose(G, green_tensor(-r), rtol=0, atol=1e-14 * np.abs(G).max())

    def test_reciprocity(self):
        rng = np.random.default_rng(1)
        r = rng.normal(size=3)
        G = green_tensor(r)
        d1, d2 = random_dipole(rng), random_dipole(rng)
        assert d1.conj() @ G @ d2 == pytest.approx(d2 @ G.T @ d1.conj(), rel=1e-13)

    def test_rejects_zero(self):
        with pytest.raises(ConfigError):
            green_tensor([0, 0, 0])

    def test_projector(self):
        assert np.allclose(far_field_projector([0, 0, 1]), np.diag([1, 1, 0]))
        rng = np.random.default_rng(2)
        for _ in range(5):
            v = rng.normal(size=3)
            P = far_field_projector(v / np.linalg.norm(v))
            assert np.allclose(P @ P, P, atol=1e-15)
            assert np.trace(P) == pytest.approx(2.0)
        with pytest.raises(ConfigError):
            far_field_projector([1, 1, 0])


def naive_couplings(array):
    """Pair-by-pair assembly from the exponential closed form."""
    n = array.n_atoms
    J = np.zeros((n, n))
    Gam = np.eye(n) * array.gamma0
    d = array.dipole
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            G = green_tensor_closed_form(array.positions[i] - array.positions[j], array.omega0)
            J[i, j] = -3 * np.pi * array.gamma0 / array.omega0 * (d.conj() @ G.real @ d).real
            Gam[i, j] = 6 * np.pi * array.gamma0 / array.omega0 * (d.conj() @ G.imag @ d).real
    return J, Gam


class TestHamiltonian:
    def test_single_atom(self):
        h = build_hamiltonian(AtomArray([[0, 0, 0]]))
        assert h.H.shape == (1, 1)
        assert h.H[0, 0] == -0.5j

    @pytest.mark.parametrize("dipole", [DIPOLE_CIRCULAR, DIPOLE_Z])
    def test_matches_naive(self, dipole):
        arr = make_ring(GeometrySpec("ring", 7, 0.3, dipole))
        J, Gam = coupling_matrices(arr)
        Jn, Gn = naive_couplings(arr)
        assert np.allclose(J, Jn, atol=1e-11)
        assert np.allclose(Gam, Gn, atol=1e-11)

    def test_invariants(self):
        arr = make_sunflower(GeometrySpec("sunflower", 5, 0.2))
        h = build_hamiltonian(arr)
        assert np.array_equal(np.diag(h.J), np.zeros(arr.n_atoms))
        assert np.array_equal(np.diag(h.Gamma), np.ones(arr.n_atoms))
        assert np.abs(h.H - h.H.T).max() <= 1e-12 * h.frobenius
        assert np.linalg.eigvalsh(h.Gamma).min() >= -1e-10
        assert h.J.dtype == float and h.Gamma.dtype == float

    def test_far_apart(self):
        h = build_hamiltonian(AtomArray([[0, 0, 0], [100, 0, 0]]))
        assert abs(h.J[0, 1]) < 1e-2 and abs(h.Gamma[0, 1]) < 1e-2

    def test_close_pair_rate(self):
        h = build_hamiltonian(AtomArray([[0, 0, 0], [0, 1e-4, 0]], dipole=DIPOLE_Z))
        assert h.Gamma[0, 1] == pytest.approx(1.0, rel=1e-6)

    def test_gamma_scaling(self):
        pos = make_ring(GeometrySpec("ring", 5, 0.3)).positions
        a = build_hamiltonian(AtomArray(pos, gamma0=1.0))
        b = build_hamiltonian(AtomArray(pos, gamma0=2.5))
        assert np.allclose(b.H, 2.5 * a.H, rtol=1e-14, atol=0)

    def test_serialization(self):
        h = build_hamiltonian(make_ring(GeometrySpec("ring", 3, 0.3)))
        lines = h.to_csv().strip().splitlines()
        assert lines[0] == "row,col,re,im" and len(lines) == 1 + 16
        data = json.loads(h.to_json())
        H = np.array(data["H"])
        assert np.allclose(H[..., 0] + 1j * H[..., 1], h.H)
