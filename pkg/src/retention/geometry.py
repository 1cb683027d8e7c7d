"""Atomic configurations: square lattice, sunflower spiral and ring.

Every generator places the structure in the ``z = 0`` plane, centred on the
origin, and marks one atom as the storage atom (the one initially excited).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from retention.errors import ConfigError

TWO_PI = 2.0 * np.pi
GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

#: Circularly polarized dipole used throughout the design studies.
DIPOLE_CIRCULAR = np.array([1.0, 1.0j, 0.0]) / np.sqrt(2.0)
DIPOLE_Z = np.array([0.0, 0.0, 1.0], dtype=complex)

Kind = Literal["square", "sunflower", "ring"]


def _as_dipole(dipole) -> np.ndarray:
    d = np.asarray(dipole)
    if d.shape == (3, 2) and not np.iscomplexobj(d):
        d = d[:, 0] + 1j * d[:, 1]
    d = np.asarray(d, dtype=complex).reshape(3)
    return d


def dipole_to_json(dipole: np.ndarray) -> list[list[float]]:
    return [[float(c.real), float(c.imag)] for c in np.asarray(dipole, dtype=complex)]


@dataclass(frozen=True)
class AtomArray:
    """Positions of N identical two-level atoms sharing one dipole orientation.

    ``positions`` has shape ``(N, 3)`` in units of the wavelength.
    """

    positions: np.ndarray
    storage_index: int = 0
    dipole: np.ndarray = field(default_factory=lambda: DIPOLE_CIRCULAR.copy())
    gamma0: float = 1.0
    omega0: float = TWO_PI

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ConfigError(f"positions must have shape (N, 3), got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ConfigError("positions must be finite")
        if pos.shape[0] > 1 and pdist(pos).min() <= 0.0:
            raise ConfigError("atom positions must be pairwise distinct")
        d = _as_dipole(self.dipole)
        if abs(np.vdot(d, d).real - 1.0) > 1e-12:
            raise ConfigError("dipole must be a unit vector (d*.d = 1)")
        idx = int(self.storage_index)
        if not 0 <= idx < pos.shape[0]:
            raise ConfigError(f"storage_index {idx} out of range for {pos.shape[0]} atoms")
        if not (self.gamma0 > 0 and self.omega0 > 0):
            raise ConfigError("gamma0 and omega0 must be positive")
        pos.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dipole", d)
        object.__setattr__(self, "storage_index", idx)
        object.__setattr__(self, "gamma0", float(self.gamma0))
        object.__setattr__(self, "omega0", float(self.omega0))

    @property
    def n_atoms(self) -> int:
        return self.positions.shape[0]

    @property
    def k0(self) -> float:
        return self.omega0

    def initial_state(self) -> np.ndarray:
        """Single excitation on the storage atom."""
        psi = np.zeros(self.n_atoms, dtype=complex)
        psi[self.storage_index] = 1.0
        return psi

    def with_positions(self, positions) -> AtomArray:
        return AtomArray(positions, self.storage_index, self.dipole, self.gamma0, self.omega0)

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "storage_index": self.storage_index,
            "dipole": dipole_to_json(self.dipole),
            "gamma0": self.gamma0,
            "omega0": self.omega0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> AtomArray:
        return cls(
            positions=data["positions"],
            storage_index=data.get("storage_index", 0),
            dipole=data.get("dipole", dipole_to_json(DIPOLE_CIRCULAR)),
            gamma0=data.get("gamma0", 1.0),
            omega0=data.get("omega0", TWO_PI),
        )


@dataclass(frozen=True)
class GeometrySpec:
    kind: Kind
    n: int
    a: float
    dipole: np.ndarray = field(default_factory=lambda: DIPOLE_CIRCULAR.copy())

    def __post_init__(self):
        if self.kind not in ("square", "sunflower", "ring"):
            raise ConfigError(f"unknown geometry kind {self.kind!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n}")
        if not self.a > 0:
            raise ConfigError(f"a must be positive, got {self.a}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "dipole", _as_dipole(self.dipole))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "a": self.a, "dipole": dipole_to_json(self.dipole)}

    @classmethod
    def from_dict(cls, data: dict) -> GeometrySpec:
        return cls(
            kind=data["kind"],
            n=data["n"],
            a=data["a"],
            dipole=data.get("dipole", dipole_to_json(DIPOLE_CIRCULAR)),
        )


def _check(spec: GeometrySpec, kind: str) -> None:
    if spec.kind != kind:
        raise ConfigError(f"expected a {kind} spec, got {spec.kind!r}")
    if spec.n < 2:
        raise ConfigError(f"{kind} requires n >= 2, got {spec.n}")


def _square_sites(n: int, a: float) -> np.ndarray:
    x = (np.arange(n) - (n - 1) / 2.0) * a
    gx, gy = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(n * n)])


def make_square(spec: GeometrySpec, storage_on_site: bool = False) -> AtomArray:
    """n x n grid with spacing ``a`` centred on the origin.

    For odd ``n`` the central site is the storage atom (N = n^2). For even
    ``n`` an extra storage atom sits at the grid centre (N = n^2 + 1), unless
    ``storage_on_site`` is set, in which case the grid site at
    ``(n/2, n/2)`` (offset ``(a/2, a/2)`` from the centre) becomes the
    storage atom and N = n^2.
    """
    _check(spec, "square")
    sites = _square_sites(spec.n, spec.a)
    n = spec.n
    if n % 2 == 1:
        return AtomArray(sites, (n * n) // 2, spec.dipole)
    if storage_on_site:
        return AtomArray(sites, (n // 2) * n + n // 2, spec.dipole)
    return AtomArray(np.vstack([np.zeros(3), sites]), 0, spec.dipole)


def sunflower_points(count: int, r_c: float) -> np.ndarray:
    """Spiral points ``(sqrt(j) r_c, j * golden_angle)`` for j = 1..count."""
    j = np.arange(1, count + 1)
    r = np.sqrt(j) * r_c
    theta = j * GOLDEN_ANGLE
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), np.zeros(count)])


def mean_nearest_neighbor(positions: np.ndarray) -> float:
    dist, _ = cKDTree(positions).query(positions, k=2)
    return float(dist[:, 1].mean())


def sunflower_radius(n: int, a: float) -> float:
    """Spiral scale r_c giving mean nearest-neighbour distance ``a``.

    The mean is taken over all n^2 + 1 atoms, storage atom at the origin
    included. Every distance scales linearly with r_c, so the solution is
    exact: r_c = a / mean_nn(r_c = 1).
    """
    unit = np.vstack([np.zeros(3), sunflower_points(n * n, 1.0)])
    return a / mean_nearest_neighbor(unit)


def make_sunflower(spec: GeometrySpec) -> AtomArray:
    _check(spec, "sunflower")
    r_c = sunflower_radius(spec.n, spec.a)
    pos = np.vstack([np.zeros(3), sunflower_points(spec.n * spec.n, r_c)])
    return AtomArray(pos, 0, spec.dipole)


def make_ring(spec: GeometrySpec) -> AtomArray:
    """``n`` atoms on a circle of radius ``a`` plus the storage atom at its centre."""
    _check(spec, "ring")
    theta = TWO_PI * np.arange(spec.n) / spec.n
    ring = np.column_stack([spec.a * np.cos(theta), spec.a * np.sin(theta), np.zeros(spec.n)])
    return AtomArray(np.vstack([np.zeros(3), ring]), 0, spec.dipole)


def make_geometry(spec: GeometrySpec, **kwargs) -> AtomArray:
    builders = {"square": make_square, "sunflower": make_sunflower, "ring": make_ring}
    return builders[spec.kind](spec, **kwargs)


def reference_structure(kind: Kind, n: int, r_min: float, dipole=DIPOLE_CIRCULAR) -> AtomArray:
    """Reference geometry whose minimum pair distance equals ``r_min``.

    These are the comparison structures of the design study: an n x n
    square grid with the storage atom on a central site, an n^2-point
    sunflower and an n-atom ring, each rescaled so that the closest pair of
    atoms sits exactly at ``r_min``.
    """
    if not r_min > 0:
        raise ConfigError(f"r_min must be positive, got {r_min}")
    if kind == "square":
        unit = make_square(GeometrySpec("square", n, 1.0, dipole), storage_on_site=True)
    else:
        unit = make_geometry(GeometrySpec(kind, n, 1.0, dipole))
    scale = r_min / min_pair_distance(unit)
    return unit.with_positions(unit.positions * scale)


def perturb(
    array: AtomArray,
    sigma_xy: float,
    sigma_z: float,
    rng: np.random.Generator,
    include_storage: bool = False,
) -> AtomArray:
    """Add independent Gaussian displacements (per-axis std ``sigma_xy`` on x, y and ``sigma_z`` on z).

    One ``(N, 3)`` standard-normal block is always drawn so the stream
    consumption does not depend on ``include_storage``.
    """
    if sigma_xy < 0 or sigma_z < 0:
        raise ConfigError("perturbation widths must be non-negative")
    noise = rng.standard_normal((array.n_atoms, 3)) * np.array([sigma_xy, sigma_xy, sigma_z])
    if not include_storage:
        noise[array.storage_index] = 0.0
    return array.with_positions(array.positions + noise)


def min_pair_distance(array: AtomArray | np.ndarray) -> float:
    pos = array.positions if isinstance(array, AtomArray) else np.asarray(array, dtype=float)
    if pos.shape[0] < 2:
        raise ConfigError("min_pair_distance needs at least two atoms")
    return float(pdist(pos).min())
