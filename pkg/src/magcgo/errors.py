"""Exception hierarchy; the CLI maps these onto exit codes."""


class MagcgoError(Exception):
    """Base class for package errors."""


class DomainError(MagcgoError, ValueError):
    """Invalid geometry or a field evaluated outside its domain."""


class FormatError(MagcgoError, ValueError):
    """Malformed input file or configuration (CLI exit code 2)."""


class NumericalError(MagcgoError, RuntimeError):
    """Solver failure, non-convergence or an inconsistent numerical verdict
    (CLI exit code 3)."""


class ConvergenceError(NumericalError):
    """An iteration failed to reach its tolerance."""


class SpectralError(NumericalError):
    """The Dirichlet problem is (numerically) singular: zero is an eigenvalue."""


class ResolutionError(NumericalError):
    """The grid or mesh cannot resolve the requested oscillation scale."""


class HypothesisError(MagcgoError, ValueError):
    """A precondition of an identification step does not hold."""
