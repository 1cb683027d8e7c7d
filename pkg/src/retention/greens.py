"""Free-space dyadic Green's tensor at the atomic transition frequency.

With ``x = k r`` the tensor is

    G0(r) = e^{ikr}/(4 pi r) [(1 + i/x - 1/x^2) I + (-1 - 3i/x + 3/x^2) rr]

which, written with spherical Hankel functions ``h_n = j_n + i y_n``, reads

    G0(r) = (i k / 4 pi) [(2 h_0 - h_2)/3 I + h_2 rr].

The Bessel form is used for evaluation: ``Im G0`` then goes smoothly to
``k/(6 pi) I`` at small separation instead of suffering the ``1/x^3``
cancellation of the raw closed form.
"""

from __future__ import annotations

import numpy as np

from retention.errors import ConfigError

SERIES_CUTOFF = 0.5


def _bessel_j0_j2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spherical j_0, j_2; power series below the cutoff where the closed form cancels."""
    j0 = np.empty_like(x)
    j2 = np.empty_like(x)
    small = x < SERIES_CUTOFF
    xs = x[small]
    x2 = xs * xs
    j0[small] = 1 - x2 / 6 * (1 - x2 / 20 * (1 - x2 / 42 * (1 - x2 / 72 * (1 - x2 / 110))))
    j2[small] = x2 / 15 * (1 - x2 / 14 * (1 - x2 / 36 * (1 - x2 / 66 * (1 - x2 / 104))))
    xl = x[~small]
    s, c = np.sin(xl), np.cos(xl)
    j0[~small] = s / xl
    j2[~small] = (3 / xl**3 - 1 / xl) * s - 3 * c / xl**2
    return j0, j2


def green_coefficients(dist: np.ndarray, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``(c_I, c_rr)`` with ``G0 = c_I I + c_rr rr``.

    ``dist`` may be any array of strictly positive separations.
    """
    x = np.atleast_1d(k * np.asarray(dist, dtype=float))
    j0, j2 = _bessel_j0_j2(x)
    s, c = np.sin(x), np.cos(x)
    y0 = -c / x
    y2 = (-3 / x**3 + 1 / x) * c - 3 * s / x**2
    pref = k / (4.0 * np.pi)
    # i*h_n = -y_n + i j_n
    c_iso = pref * (-(2.0 * y0 - y2) / 3.0 + 1j * (2.0 * j0 - j2) / 3.0)
    c_rr = pref * (-y2 + 1j * j2)
    if np.ndim(dist) == 0:
        return c_iso[0], c_rr[0]
    return c_iso, c_rr


def green_tensor(r, omega0: float = 2.0 * np.pi) -> np.ndarray:
    """Complex symmetric 3x3 Green's tensor for displacement ``r`` (c = 1, so k = omega0)."""
    r = np.asarray(r, dtype=float).reshape(3)
    dist = np.linalg.norm(r)
    if dist == 0.0:
        raise ConfigError("Green's tensor is singular at zero separation")
    rhat = r / dist
    c_iso, c_rr = green_coefficients(dist, omega0)
    return c_iso * np.eye(3) + c_rr * np.outer(rhat, rhat)


def green_tensor_closed_form(r, omega0: float = 2.0 * np.pi) -> np.ndarray:
    """Direct evaluation of the exponential closed form (reference path)."""
    r = np.asarray(r, dtype=float).reshape(3)
    dist = np.linalg.norm(r)
    if dist == 0.0:
        raise ConfigError("Green's tensor is singular at zero separation")
    rhat = r / dist
    x = omega0 * dist
    pref = np.exp(1j * x) / (4.0 * np.pi * dist)
    iso = 1.0 + 1j / x - 1.0 / x**2
    rr = -1.0 - 3j / x + 3.0 / x**2
    return pref * (iso * np.eye(3) + rr * np.outer(rhat, rhat))


def far_field_projector(rhat) -> np.ndarray:
    """Transverse projector ``I - rr`` for a unit direction."""
    rhat = np.asarray(rhat, dtype=float).reshape(3)
    if abs(np.linalg.norm(rhat) - 1.0) > 1e-12:
        raise ConfigError("far_field_projector needs a unit vector")
    return np.eye(3) - np.outer(rhat, rhat)
