import numpy as np
import pytest

from retention.errors import ConfigError
from retention.farfield import (
    SphereQuadrature,
    gamma_pattern_check,
    gamma_pattern_table,
    im_green_angular_spectrum,
    integrated_pattern,
    integrated_patterns,
    mode_intensity,
    pattern_intensities,
)
from retention.geometry import DIPOLE_CIRCULAR, DIPOLE_Z, AtomArray, GeometrySpec, make_ring
from retention.greens import green_tensor
from retention.hamiltonian import build_hamiltonian
from retention.spectral import decompose

ORIGIN = AtomArray([[0.0, 0.0, 0.0]], dipole=DIPOLE_Z)


def test_quadrature_weights():
    q = SphereQuadrature.product(16)
    assert q.weights.sum() == pytest.approx(4 * np.pi, rel=1e-14)
    assert np.allclose(np.linalg.norm(q.directions, axis=1), 1)
    # exact for low-degree polynomials: <z^2> = 4 pi / 3
    assert q.weights @ q.directions[:, 2] ** 2 == pytest.approx(4 * np.pi / 3, rel=1e-14)
    with pytest.raises(ConfigError):
        SphereQuadrature.product(0)


class TestIntensity:
    def test_along_dipole(self):
        assert mode_intensity(ORIGIN, [1.0], [0, 0, 1]) == pytest.approx(0.0, abs=1e-30)

    def test_transverse(self):
        assert mode_intensity(ORIGIN, [1.0], [1, 0, 0]) == pytest.approx(1.0)

    def test_half_wavelength_pair(self):
        arr = AtomArray([[0, 0, 0], [0.5, 0, 0]], dipole=DIPOLE_Z)
        c = np.ones(2) / np.sqrt(2)
        assert mode_intensity(arr, c, [1, 0, 0]) == pytest.approx(0.0, abs=1e-28)

    def test_vectorized_matches_loop(self):
        arr = make_ring(GeometrySpec("ring", 5, 0.3))
        rng = np.random.default_rng(0)
        c = rng.normal(size=6) + 1j * rng.normal(size=6)
        c /= np.linalg.norm(c)
        dirs = SphereQuadrature.product(4).directions
        vec = pattern_intensities(arr, c, dirs)
        loop = [mode_intensity(arr, c, d) for d in dirs]
        assert np.allclose(vec, loop, rtol=1e-12, atol=1e-15)
        assert np.all(vec >= 0)

    def test_rejects_unnormalized(self):
        with pytest.raises(ConfigError):
            integrated_pattern(ORIGIN, [2.0])
        with pytest.raises(ConfigError):
            mode_intensity(ORIGIN, [1.0, 0.0], [1, 0, 0])


@pytest.mark.parametrize("dipole", [DIPOLE_Z, DIPOLE_CIRCULAR])
def test_single_atom_total(dipole):
    arr = AtomArray([[0.0, 0.0, 0.0]], dipole=dipole)
    for order in (8, 32):
        assert integrated_pattern(arr, [1.0], order).integrated == pytest.approx(8 * np.pi / 3, abs=1e-10)


def test_translation_invariance():
    arr = make_ring(GeometrySpec("ring", 6, 0.3))
    s = decompose(build_hamiltonian(arr))
    moved = arr.with_positions(arr.positions + np.array([0.37, -1.2, 0.4]))
    assert np.allclose(integrated_patterns(arr, s), integrated_patterns(moved, s), rtol=1e-10)


def test_rate_pattern_relation_ring():
    arr = make_ring(GeometrySpec("ring", 12, 0.45))
    s = decompose(build_hamiltonian(arr))
    err = gamma_pattern_check(arr, s, 64)
    assert err.shape == (13,)
    assert err.max() <= 1e-6


def test_refinement_converged():
    arr = make_ring(GeometrySpec("ring", 12, 0.45))
    s = decompose(build_hamiltonian(arr))
    p64 = integrated_patterns(arr, s, 64)
    p128 = integrated_patterns(arr, s, 128)
    assert np.allclose(p128, p64, rtol=1e-10, atol=1e-14)


def test_table_columns():
    s = decompose(build_hamiltonian(ORIGIN))
    t = gamma_pattern_table(ORIGIN, s, 16)
    assert t.shape == (1, 4)
    assert t[0, 1] == 1.0 and t[0, 2] == pytest.approx(8 * np.pi / 3)


@pytest.mark.parametrize("r", [[0.1, 0, 0], [0.3, -0.4, 0.2], [0, 0, 1.0], [1.2, 0.9, -0.8]])
def test_angular_spectrum_identity(r):
    ref = green_tensor(r).imag
    val = im_green_angular_spectrum(r)
    assert np.abs(val.real - ref).max() <= 1e-6
    assert np.abs(val.imag).max() <= 1e-6
