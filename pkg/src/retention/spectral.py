"""Biorthogonal eigendecomposition of the effective Hamiltonian.

``H`` is complex symmetric (``H = H^T``), so if ``H r = k r`` then
``H^dagger conj(r) = conj(k) conj(r)``: left eigenvectors are the complex
conjugates of the right ones and ``<L|R> = r^T r``. Inside a degenerate
cluster the right eigenvectors returned by LAPACK are an arbitrary basis,
so they are re-orthogonalized with respect to the bilinear form ``x^T y``
before the identification is used.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from retention.errors import ConfigError, DefectiveMatrix, NumericalFailure, PairingFailure
from retention.hamiltonian import EffectiveHamiltonian

DEFECT_TOL = 1e-12
PAIR_TOL = 1e-8
GAIN_TOL = 1e-10


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues and biorthogonal eigenvectors, columns of ``right_vecs``/``left_vecs``.

    Modes are sorted by ascending decay rate, ties by ascending ``Re kappa``.
    """

    eigenvalues: np.ndarray
    right_vecs: np.ndarray
    left_vecs: np.ndarray
    norms: np.ndarray
    decay_rates: np.ndarray
    gamma0: float = 1.0
    verification: dict = field(default_factory=dict)

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.shape[0]

    def biorthogonality_error(self) -> float:
        overlap = self.left_vecs.conj().T @ self.right_vecs
        overlap = overlap / self.norms[None, :]
        return float(np.max(np.abs(overlap - np.eye(self.n_modes))))

    def completeness_error(self) -> float:
        ident = (self.right_vecs / self.norms[None, :]) @ self.left_vecs.conj().T
        return float(np.max(np.abs(ident - np.eye(self.n_modes))))

    def reconstruct(self) -> np.ndarray:
        return (self.right_vecs * (self.eigenvalues / self.norms)[None, :]) @ self.left_vecs.conj().T


@dataclass(frozen=True)
class ModeWeights:
    weights: np.ndarray
    initial_state: np.ndarray
    normalized_magnitudes: np.ndarray

    @property
    def largest(self) -> int:
        """Index of the mode with the largest |w|."""
        return int(np.argmax(np.abs(self.weights)))


def _as_matrix(h) -> tuple[np.ndarray, float]:
    if isinstance(h, EffectiveHamiltonian):
        return np.asarray(h.H), h.gamma0
    return np.asarray(h, dtype=complex), 1.0


def _clusters(values: np.ndarray, tol: float) -> list[list[int]]:
    """Connected groups of eigenvalues closer than ``tol``."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    close = np.abs(values[:, None] - values[None, :]) <= tol
    for i, j in zip(*np.nonzero(np.triu(close, 1))):
        parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [g for g in groups.values() if len(g) > 1]


def _symmetric_orthogonalize(vecs: np.ndarray) -> np.ndarray:
    """Gram-Schmidt under the bilinear form ``x^T y`` with pivoting."""
    remaining = [vecs[:, i].copy() for i in range(vecs.shape[1])]
    out = []
    while remaining:
        selfdots = [abs(v @ v) / np.vdot(v, v).real for v in remaining]
        k = int(np.argmax(selfdots))
        if selfdots[k] < DEFECT_TOL:
            raise DefectiveMatrix("degenerate eigenspace is isotropic under x^T y")
        v = remaining.pop(k)
        v = v / np.linalg.norm(v)
        out.append(v)
        vv = v @ v
        remaining = [u - (v @ u) / vv * v for u in remaining]
    return np.column_stack(out)


def decompose(h, verify: bool = True) -> SpectralData:
    """Right/left eigenpairs of a complex symmetric ``H``.

    With ``verify`` the spectrum of ``H^dagger`` is computed independently
    and matched to ``conj(kappa)``; the largest eigenvalue mismatch and the
    largest left-vector misalignment are stored in ``verification``.
    """
    H, gamma0 = _as_matrix(h)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigError("Hamiltonian must be square")
    if not np.all(np.isfinite(H)):
        raise ConfigError("Hamiltonian contains non-finite entries")
    scale = np.linalg.norm(H, "fro")
    tol = PAIR_TOL * scale

    kappa, R = scipy.linalg.eig(H)
    rates = -2.0 * kappa.imag
    order = np.lexsort((kappa.real, rates))
    kappa, R, rates = kappa[order], R[:, order], rates[order]
    R = R / np.linalg.norm(R, axis=0)[None, :]
    for group in _clusters(kappa, tol):
        R[:, group] = _symmetric_orthogonalize(R[:, group])

    L = R.conj()
    norms = np.sum(R * R, axis=0)
    if np.any(np.abs(norms) < DEFECT_TOL):
        raise DefectiveMatrix(f"vanishing biorthogonal norm: min |<L|R>| = {np.abs(norms).min():.3e}")

    if isinstance(h, EffectiveHamiltonian) and rates[0] < -GAIN_TOL * gamma0:
        raise NumericalFailure(f"negative decay rate {rates[0]:.3e} in a dissipative Hamiltonian")

    verification = {}
    if verify:
        verification = _verify_left(H, kappa, L, tol)

    for arr in (kappa, R, L, norms, rates):
        arr.setflags(write=False)
    return SpectralData(kappa, R, L, norms, rates, gamma0, verification)


def _verify_left(H: np.ndarray, kappa: np.ndarray, L: np.ndarray, tol: float) -> dict:
    mu, L2 = scipy.linalg.eig(H.conj().T)
    cost = np.abs(mu[:, None] - kappa.conj()[None, :])
    rows, cols = linear_sum_assignment(cost)
    mismatch = cost[rows, cols]
    if mismatch.max() > tol:
        raise PairingFailure(f"H^dagger spectrum does not match conj(kappa): max gap {mismatch.max():.3e}")
    partner = np.empty(len(kappa), dtype=int)
    partner[cols] = rows

    cluster_of = {j: [j] for j in range(len(kappa))}
    for group in _clusters(kappa, tol):
        for j in group:
            cluster_of[j] = group
    for j in range(len(kappa)):
        # several candidates within tolerance are fine only inside a degenerate cluster
        if np.count_nonzero(cost[:, j] <= tol) > len(cluster_of[j]):
            raise PairingFailure(f"ambiguous left/right pairing for mode {j}")

    L2 = L2 / np.linalg.norm(L2, axis=0)[None, :]
    misalign = 0.0
    for j in range(len(kappa)):
        q, _ = np.linalg.qr(L2[:, partner[cluster_of[j]]])
        resid = L[:, j] - q @ (q.conj().T @ L[:, j])
        misalign = max(misalign, float(np.linalg.norm(resid)))
    return {"eigenvalue_mismatch": float(mismatch.max()), "left_misalignment": misalign}


def residuals(h, s: SpectralData) -> np.ndarray:
    """Normalized right and left residuals per mode, shape ``(N, 2)``."""
    H, _ = _as_matrix(h)
    fro = np.linalg.norm(H, "fro")
    R, L, k = s.right_vecs, s.left_vecs, s.eigenvalues
    right = np.linalg.norm(H @ R - R * k[None, :], axis=0) / (fro * np.linalg.norm(R, axis=0))
    left = np.linalg.norm(H.conj().T @ L - L * k.conj()[None, :], axis=0) / (fro * np.linalg.norm(L, axis=0))
    return np.column_stack([right, left])


def mode_weights(s: SpectralData, initial_state) -> ModeWeights:
    """Overlap weights ``w = <psi0|R><L|psi0> / <L|R>``; they sum to one."""
    psi0 = np.asarray(initial_state, dtype=complex).reshape(-1)
    if psi0.shape[0] != s.n_modes:
        raise ConfigError("initial state dimension does not match the Hamiltonian")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-12:
        raise ConfigError("initial state must have unit norm")
    w = (psi0.conj() @ s.right_vecs) * (s.left_vecs.conj().T @ psi0) / s.norms
    mags = np.abs(w)
    p = mags / mags.sum()
    return ModeWeights(weights=w, initial_state=psi0, normalized_magnitudes=p)


MODE_COLUMNS = ["mode", "re_kappa", "im_kappa", "gamma_over_gamma0", "abs_w", "abs_w_sq", "arg_w", "p"]


def modes_table(s: SpectralData, w: ModeWeights) -> list[list]:
    rows = []
    for ell in range(s.n_modes):
        z = w.weights[ell]
        rows.append(
            [
                ell,
                float(s.eigenvalues[ell].real),
                float(s.eigenvalues[ell].imag),
                float(s.decay_rates[ell] / s.gamma0),
                float(abs(z)),
                float(abs(z) ** 2),
                float(np.angle(z)),
                float(w.normalized_magnitudes[ell]),
            ]
        )
    return rows


def modes_csv(s: SpectralData, w: ModeWeights) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MODE_COLUMNS)
    for row in modes_table(s, w):
        writer.writerow([row[0]] + [repr(v) for v in row[1:]])
    return buf.getvalue()
