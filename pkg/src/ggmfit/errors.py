"""Exception types shared by the ggmfit modules."""


class GgmfitError(Exception):
    """Base class for all ggmfit-specific errors."""


class NotPositiveDefinite(GgmfitError):
    """A symmetric factorization hit a nonpositive pivot."""


class NegativeEigenvalue(GgmfitError):
    """A matrix required to be positive semidefinite has a clearly
    negative eigenvalue."""


class ZeroVariance(GgmfitError):
    """Correlation scaling requested for a variable with zero variance."""

    def __init__(self, vertex):
        self.vertex = vertex
        super().__init__(f"variable {vertex} has zero variance")


class LocalMarginalSingular(GgmfitError):
    """An empirical marginal covariance block is singular, so the
    corresponding proportional-scaling update is undefined."""

    def __init__(self, subset):
        self.subset = tuple(int(v) for v in subset)
        super().__init__(
            f"empirical covariance marginal on {self.subset} is not "
            "positive definite")


class NonpositiveSchur(GgmfitError):
    """A vertex update produced a nonpositive Schur complement; the
    current covariance iterate is singular or infeasible."""


class CertificateViolated(GgmfitError):
    """Zeroing the non-edge entries of the concentration matrix broke
    positive definiteness even though the termination norm bound held.
    Indicates misconfigured tolerances; should be unreachable under the
    default settings."""


class NotDecomposable(GgmfitError):
    """The closed-form estimate was requested for a graph that is not
    decomposable."""


class NonFiniteResult(GgmfitError):
    """An update produced NaN or infinity."""


class GraphFormatError(GgmfitError):
    """An edge-list or matrix file could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")
