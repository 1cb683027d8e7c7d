"""Spectral surrogate cost for ranking structures.

    F = alpha * sum_l p_l log(Gamma_l / gamma0) - beta * sum_l p_l log p_l

with ``p_l = |w_l| / sum |w|``. Low F means the initial excitation is
concentrated (low weight entropy) in slowly decaying modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from retention.errors import ConfigError
from retention.spectral import ModeWeights, SpectralData

RATE_FLOOR = 1e-300


@dataclass(frozen=True)
class SurrogateParams:
    alpha: float = 1.0
    beta: float = 3.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.alpha == 0 and self.beta == 0:
            raise ConfigError("alpha and beta cannot both be zero")


@dataclass(frozen=True)
class SurrogateScore:
    F: float
    log_rate_term: float
    entropy_term: float


def surrogate_terms(p: np.ndarray, rates_over_gamma0: np.ndarray) -> tuple[float, float]:
    """``(sum p log Gamma, -sum p log p)`` with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=float)
    g = np.maximum(np.asarray(rates_over_gamma0, dtype=float), RATE_FLOOR)
    log_rate = float(np.sum(p * np.log(g)))
    nz = p > 0
    entropy = float(-np.sum(p[nz] * np.log(p[nz])))
    return log_rate, entropy


def surrogate_cost(
    s: SpectralData, w: ModeWeights, params: SurrogateParams = SurrogateParams()
) -> SurrogateScore:
    log_rate, entropy = surrogate_terms(w.normalized_magnitudes, s.decay_rates / s.gamma0)
    return SurrogateScore(params.alpha * log_rate + params.beta * entropy, log_rate, entropy)
