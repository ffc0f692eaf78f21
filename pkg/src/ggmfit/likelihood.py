"""Empirical covariances and the objective-function layer.

Log-likelihoods drop additive constants and carry the factor n/2, so the
same scale is used by solvers, bounds and gap certificates:

    loglik(K) = (n/2) log det K - (n/2) trace(K S).

The empirical covariance always divides by n (never n - 1); centering is
an explicit flag because the model itself is mean-zero.  With centering,
the rank of S drops to at most n - 1, which matters for existence checks
and semidefinite starting values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import numkernel as nk
from .errors import GraphFormatError, ZeroVariance

__all__ = [
    "SampleStats",
    "empirical_cov",
    "stats_from_covariance",
    "to_correlation",
    "unscale_concentration",
    "loglik",
    "grad_norm_primal",
    "dual_bound",
    "duality_gap",
    "load_data_table",
]


@dataclass(frozen=True, eq=False)
class SampleStats:
    """Empirical covariance S with the sample size that produced it.

    Immutable; the stored array is marked read-only.
    """

    S: np.ndarray
    n: int
    centered: bool = False
    scaled_to_correlation: bool = False
    #: sqrt of the original diagonal when scaled_to_correlation is set;
    #: used to map estimates back to the original scale.
    correlation_scale: np.ndarray | None = None

    @property
    def d(self) -> int:
        return self.S.shape[0]

    @property
    def rank_budget(self) -> int:
        """Largest rank the empirical covariance can attain: n - 1 after
        centering, n otherwise."""
        return self.n - 1 if self.centered else self.n

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample size must be positive")
        S = np.array(self.S, dtype=np.float64, order="C")
        S.flags.writeable = False
        object.__setattr__(self, "S", S)


def empirical_cov(data, center: bool = False) -> SampleStats:
    """Empirical covariance of a table of observations (rows).

    S = (1/n) sum_v x^v (x^v)^T, with column means subtracted first when
    ``center`` is set (same divisor n).
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.size == 0:
        raise ValueError("data must be a nonempty n x d table")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    n = X.shape[0]
    if center:
        X = X - X.mean(axis=0)
    S = (X.T @ X) / n
    return SampleStats(S=(S + S.T) / 2.0, n=n, centered=center)


def stats_from_covariance(S, n: int, centered: bool = False,
                          check_psd: bool | None = None) -> SampleStats:
    """Wrap a precomputed covariance matrix.

    Symmetry is always validated; the PSD check (smallest eigenvalue
    above -1e-10 on the scale of the largest) defaults to on for orders
    up to 2000 and off beyond, where it would dominate load time.
    """
    S = nk.check_symmetric(S, tol=1e-12)
    if check_psd is None:
        check_psd = S.shape[0] <= 2000
    if check_psd and S.shape[0]:
        w = np.linalg.eigvalsh(S)
        if w[0] < -1e-10 * max(1.0, w[-1]):
            raise ValueError(
                f"covariance is not positive semidefinite (min eig {w[0]:g})")
    return SampleStats(S=S, n=int(n), centered=centered)


def to_correlation(stats: SampleStats) -> SampleStats:
    """Rescale S to a correlation matrix, recording the scale.

    The returned stats carry sqrt(diag S) so that concentration
    estimates for the scaled problem can be mapped back with
    :func:`unscale_concentration`.
    """
    diag = np.diagonal(stats.S).copy()
    bad = np.flatnonzero(diag <= 0.0)
    if bad.size:
        raise ZeroVariance(int(bad[0]))
    scale = np.sqrt(diag)
    S = stats.S / np.outer(scale, scale)
    np.fill_diagonal(S, 1.0)
    return replace(stats, S=(S + S.T) / 2.0, scaled_to_correlation=True,
                   correlation_scale=scale)


def unscale_concentration(K, stats: SampleStats) -> np.ndarray:
    """Map a concentration matrix fitted on correlation-scaled stats back
    to the original variable scale."""
    if stats.correlation_scale is None:
        return np.array(K, dtype=np.float64)
    s = stats.correlation_scale
    return K / np.outer(s, s)


def loglik(K, stats: SampleStats) -> float:
    """(n/2) log det K - (n/2) trace(K S); additive constants dropped."""
    K = np.asarray(K, dtype=np.float64)
    ld = nk.logdet_pd(K)
    tr = float(np.sum(K * stats.S))
    return 0.5 * stats.n * (ld - tr)


def grad_norm_primal(Sigma, stats: SampleStats, g) -> float:
    """Max absolute deviation of Sigma from S on the diagonal and edges.

    This is the max-abs norm of the likelihood gradient up to the factor
    n/2; the stopping rule compares it against 2 eps / n.
    """
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if Sigma.shape != stats.S.shape:
        raise ValueError("matrix orders do not match")
    return nk.max_abs_dev(nk.pattern_project(Sigma - stats.S, g))


def dual_bound(Sigma, stats: SampleStats) -> float:
    """Upper bound -(n/2)(log det Sigma + d) on the log-likelihood.

    Valid whenever Sigma is positive definite and agrees with S on the
    diagonal and all edges (dual feasibility, the caller's
    responsibility).
    """
    Sigma = np.asarray(Sigma, dtype=np.float64)
    return -0.5 * stats.n * (nk.logdet_pd(Sigma) + Sigma.shape[0])


def duality_gap(K_check, Sigma, stats: SampleStats) -> float:
    """(n/2){trace(K S) - log det(K Sigma) - d} for a feasible pair.

    Equals dual_bound(Sigma) - loglik(K_check); nonnegative, and zero
    exactly at the optimum.  The fitted likelihood is within this gap of
    its maximum.
    """
    K_check = np.asarray(K_check, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    d = Sigma.shape[0]
    tr = float(np.sum(K_check * stats.S))
    ld = nk.logdet_pd(K_check) + nk.logdet_pd(Sigma)
    return 0.5 * stats.n * (tr - ld - d)


def load_data_table(source) -> np.ndarray:
    """Load a delimited text table of observations (rows).

    Accepts whitespace- or comma-separated values; '#' starts a comment.
    """
    own = not hasattr(source, "read")
    fh = open(source, "r", encoding="utf-8") if own else source
    path = source if own else getattr(source, "name", "<stream>")
    try:
        rows = []
        width = None
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(",") if "," in line else line.split()
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise GraphFormatError(path, lineno,
                                       "non-numeric entry") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise GraphFormatError(
                    path, lineno, f"expected {width} columns, got {len(row)}")
            rows.append(row)
        if not rows:
            raise GraphFormatError(path, 0, "empty data table")
        return np.asarray(rows, dtype=np.float64)
    finally:
        if own:
            fh.close()
