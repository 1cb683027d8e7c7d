"""Exception hierarchy shared across the package."""


class RetentionError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RetentionError, ValueError):
    """Invalid user input: geometry parameters, config files, flags."""


class NumericalFailure(RetentionError, ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class DefectiveMatrix(NumericalFailure):
    """The Hamiltonian is (numerically) not diagonalizable."""


class PairingFailure(NumericalFailure):
    """Right and left eigenvalues could not be matched unambiguously."""


class StepTooLarge(NumericalFailure):
    """An explicit integration step exceeds the stability bound."""


class DegenerateSplit(NumericalFailure):
    """The two dominant modes have coincident real parts."""


class Infeasible(RetentionError):
    """No structure satisfying the minimum-distance constraint was produced."""


class InfeasibleSeed(Infeasible):
    """The optimization seed violates the distance constraint beyond repair."""
