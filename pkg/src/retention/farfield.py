"""Far-field radiation pattern of collective modes and its solid-angle integral.

The dimensionless pattern of a mode with amplitudes ``c_j`` is

    I(rhat) = | sum_j (I - rhat rhat) d c_j exp(-i k0 rhat . r_j) |^2

and its integral over the sphere ``P`` satisfies ``Gamma / gamma0 = 3 P / (8 pi)``
for unit-norm amplitudes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from retention.errors import ConfigError
from retention.geometry import AtomArray
from retention.greens import far_field_projector
from retention.spectral import SpectralData

DEFAULT_ORDER = 64
SUBRADIANT_FLOOR = 1e-8


@dataclass(frozen=True)
class SphereQuadrature:
    """Gauss-Legendre in cos(theta) times the trapezoid rule in phi."""

    theta: np.ndarray
    phi: np.ndarray
    directions: np.ndarray
    weights: np.ndarray

    @classmethod
    def product(cls, order: int) -> SphereQuadrature:
        if order < 1:
            raise ConfigError("quadrature order must be positive")
        mu, w_mu = leggauss(order)
        n_phi = 2 * order
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        mm, pp = np.meshgrid(mu, phi, indexing="ij")
        sin_t = np.sqrt(1.0 - mm**2)
        directions = np.stack([sin_t * np.cos(pp), sin_t * np.sin(pp), mm], axis=-1).reshape(-1, 3)
        weights = (w_mu[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None, :]).ravel()
        return cls(np.arccos(mm).ravel(), pp.ravel(), directions, weights)


@dataclass(frozen=True)
class RadiationPattern:
    quadrature: SphereQuadrature
    intensities: np.ndarray
    integrated: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["theta", "phi", "weight", "intensity"])
        q = self.quadrature
        for row in zip(q.theta, q.phi, q.weights, self.intensities):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def _unit_amplitudes(mode_vec, n_atoms: int) -> np.ndarray:
    c = np.asarray(mode_vec, dtype=complex).reshape(-1)
    if c.shape[0] != n_atoms:
        raise ConfigError("mode vector length does not match the array")
    if abs(np.vdot(c, c).real - 1.0) > 1e-10:
        raise ConfigError("mode vector must satisfy sum |c_j|^2 = 1")
    return c


def mode_intensity(array: AtomArray, mode_vec, rhat) -> float:
    """Pattern in one direction, summed atom by atom."""
    c = _unit_amplitudes(mode_vec, array.n_atoms)
    proj = far_field_projector(rhat)
    rhat = np.asarray(rhat, dtype=float)
    field = np.zeros(3, dtype=complex)
    for cj, rj in zip(c, array.positions):
        field += proj @ array.dipole * cj * np.exp(-1j * array.k0 * rhat @ rj)
    return float(np.vdot(field, field).real)


def pattern_intensities(array: AtomArray, mode_vec, directions: np.ndarray) -> np.ndarray:
    """Vectorized pattern: ``|array factor|^2 * |(I - rr) d|^2``."""
    c = np.asarray(mode_vec, dtype=complex).reshape(-1)
    phases = np.exp(-1j * array.k0 * (directions @ array.positions.T))
    factor = phases @ c
    d = array.dipole
    transverse = np.vdot(d, d).real - np.abs(directions @ d) ** 2
    return np.abs(factor) ** 2 * transverse


def integrated_pattern(array: AtomArray, mode_vec, order: int = DEFAULT_ORDER) -> RadiationPattern:
    c = _unit_amplitudes(mode_vec, array.n_atoms)
    quad = SphereQuadrature.product(order)
    intensities = pattern_intensities(array, c, quad.directions)
    return RadiationPattern(quad, intensities, float(quad.weights @ intensities))


def integrated_patterns(array: AtomArray, s: SpectralData, order: int = DEFAULT_ORDER) -> np.ndarray:
    """P for every mode, right eigenvectors renormalized to unit Euclidean norm."""
    quad = SphereQuadrature.product(order)
    R = s.right_vecs / np.linalg.norm(s.right_vecs, axis=0)[None, :]
    phases = np.exp(-1j * array.k0 * (quad.directions @ array.positions.T))
    factors = phases @ R
    d = array.dipole
    transverse = np.vdot(d, d).real - np.abs(quad.directions @ d) ** 2
    return (quad.weights * transverse) @ (np.abs(factors) ** 2)


def gamma_pattern_check(array: AtomArray, s: SpectralData, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Per-mode mismatch between ``Gamma/gamma0`` and ``3 P / 8 pi``.

    Relative error, except absolute error for modes with
    ``Gamma/gamma0 < 1e-8`` where the relative value is meaningless.
    """
    return gamma_pattern_table(array, s, order)[:, 3]


def gamma_pattern_table(array: AtomArray, s: SpectralData, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Rows of ``(mode, Gamma/gamma0, P, error)``."""
    rate = s.decay_rates / s.gamma0
    P = integrated_patterns(array, s, order)
    diff = np.abs(rate - 3.0 * P / (8.0 * np.pi))
    err = np.where(np.abs(rate) < SUBRADIANT_FLOOR, diff, diff / np.maximum(np.abs(rate), SUBRADIANT_FLOOR))
    return np.column_stack([np.arange(s.n_modes), rate, P, err])


def im_green_angular_spectrum(r, omega0: float = 2.0 * np.pi, order: int = DEFAULT_ORDER) -> np.ndarray:
    """``omega0/(16 pi^2) * sphere integral of (I - rr) exp(i k rhat . r)`` by quadrature.

    Independent route to ``Im G0(r)``; the imaginary part of the returned
    matrix vanishes up to quadrature error.
    """
    r = np.asarray(r, dtype=float).reshape(3)
    quad = SphereQuadrature.product(order)
    D = quad.directions
    phase = np.exp(1j * omega0 * (D @ r)) * quad.weights
    outer = np.einsum("m,mi,mj->ij", phase, D, D)
    total = np.eye(3) * phase.sum() - outer
    return omega0 / (16.0 * np.pi**2) * total
