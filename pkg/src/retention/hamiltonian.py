"""Cooperative couplings and the effective non-Hermitian Hamiltonian H = J - (i/2) Gamma."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from retention.errors import ConfigError
from retention.geometry import AtomArray
from retention.greens import green_coefficients


@dataclass(frozen=True)
class EffectiveHamiltonian:
    J: np.ndarray
    Gamma: np.ndarray
    H: np.ndarray
    gamma0: float = 1.0

    @property
    def n_atoms(self) -> int:
        return self.H.shape[0]

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.H, "fro"))

    def to_json(self) -> str:
        """Row-major dump with ``[re, im]`` pairs for H."""
        return json.dumps(
            {
                "n_atoms": self.n_atoms,
                "gamma0": self.gamma0,
                "J": self.J.tolist(),
                "Gamma": self.Gamma.tolist(),
                "H": [[[z.real, z.imag] for z in row] for row in self.H],
            }
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", "col", "re", "im"])
        for i, j in np.ndindex(self.H.shape):
            z = self.H[i, j]
            writer.writerow([i, j, repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()


def coupling_matrices(array: AtomArray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(J, Gamma)`` in absolute rate units (multiples of ``gamma0``)."""
    pos = array.positions
    n = pos.shape[0]
    J = np.zeros((n, n))
    Gamma = np.diag(np.full(n, array.gamma0))
    if n == 1:
        return J, Gamma
    iu, ju = np.triu_indices(n, 1)
    disp = pos[iu] - pos[ju]
    dist = np.linalg.norm(disp, axis=1)
    if np.any(dist == 0.0):
        raise ConfigError("coincident atoms: Hamiltonian undefined")
    rhat = disp / dist[:, None]
    d = array.dipole
    # d* . (c_I I + c_rr rr) . d = c_I |d|^2 + c_rr |r.d|^2 ; both sandwiches are real
    proj = np.abs(rhat @ d) ** 2
    norm_d = float(np.vdot(d, d).real)
    c_iso, c_rr = green_coefficients(dist, array.k0)
    re_part = c_iso.real * norm_d + c_rr.real * proj
    im_part = c_iso.imag * norm_d + c_rr.imag * proj
    scale = np.pi * array.gamma0 / array.omega0
    J[iu, ju] = J[ju, iu] = -3.0 * scale * re_part
    Gamma[iu, ju] = Gamma[ju, iu] = 6.0 * scale * im_part
    return J, Gamma


def build_hamiltonian(array: AtomArray) -> EffectiveHamiltonian:
    """Assemble H for the single-excitation sector.

    The divergent self Lamb shift is absorbed into the transition
    frequency (``J_jj = 0``); the self decay is ``Gamma_jj = gamma0``.
    """
    J, Gamma = coupling_matrices(array)
    H = J - 0.5j * Gamma
    for m in (J, Gamma, H):
        m.setflags(write=False)
    return EffectiveHamiltonian(J=J, Gamma=Gamma, H=H, gamma0=array.gamma0)
