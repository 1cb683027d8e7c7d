"""Local-excitation retention in impurity-assisted atomic arrays.

Builds the single-excitation non-Hermitian Hamiltonian of an atom array,
decomposes it biorthogonally, scores structures with a spectral surrogate
and optimizes atom positions under a minimum-distance constraint.

Units: lengths in transition wavelengths, ``omega0 = k0 = 2*pi``, rates
and inverse times in units of the single-atom decay rate ``gamma0``.
"""

from retention.errors import (
    ConfigError,
    DefectiveMatrix,
    DegenerateSplit,
    Infeasible,
    InfeasibleSeed,
    NumericalFailure,
    PairingFailure,
    RetentionError,
    StepTooLarge,
)
from retention.geometry import (
    AtomArray,
    GeometrySpec,
    make_geometry,
    make_ring,
    make_square,
    make_sunflower,
    min_pair_distance,
    perturb,
    reference_structure,
)
from retention.hamiltonian import EffectiveHamiltonian, build_hamiltonian
from retention.spectral import ModeWeights, SpectralData, decompose, mode_weights, residuals
from retention.dynamics import (
    SurvivalTrace,
    TwoModeModel,
    default_times,
    survival_modesum,
    survival_ode,
    two_mode_analysis,
)
from retention.surrogate import SurrogateParams, SurrogateScore, surrogate_cost
from retention.optimizer import OptimizationProblem, OptimizationResult, multi_start, optimize

__version__ = "0.1.0"

__all__ = [
    "AtomArray",
    "ConfigError",
    "DefectiveMatrix",
    "DegenerateSplit",
    "EffectiveHamiltonian",
    "GeometrySpec",
    "Infeasible",
    "InfeasibleSeed",
    "ModeWeights",
    "NumericalFailure",
    "OptimizationProblem",
    "OptimizationResult",
    "PairingFailure",
    "RetentionError",
    "SpectralData",
    "StepTooLarge",
    "SurrogateParams",
    "SurrogateScore",
    "SurvivalTrace",
    "TwoModeModel",
    "build_hamiltonian",
    "decompose",
    "default_times",
    "make_geometry",
    "make_ring",
    "make_square",
    "make_sunflower",
    "min_pair_distance",
    "mode_weights",
    "multi_start",
    "optimize",
    "perturb",
    "reference_structure",
    "residuals",
    "surrogate_cost",
    "survival_modesum",
    "survival_ode",
    "two_mode_analysis",
]
