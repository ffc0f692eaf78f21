"""Neighbourhood coordinate descent on the dual problem.

The covariance iterate stays dually feasible throughout: entries on the
diagonal and the edges are never written, only the non-neighbour entries
of one vertex column change per step, maximizing the determinant given
the rest.  Because the empirical covariance itself is a feasible (if
possibly singular) starting point, the solver runs in two phases:

1. covariance-only sweeps, semidefinite-safe via pseudoinverses, until
   consecutive iterates differ by less than 2 eps / n in the maximum
   column sum norm;
2. if the smallest eigenvalue cleared that threshold, the concentration
   matrix is materialized once and then tracked through every further
   vertex step without any new inversion, until the column sums of its
   off-pattern entries drop below eps'' = min(2 eps / n, 1/d).

Termination at eps'' certifies that zeroing the off-pattern entries
leaves a positive definite matrix (the input is autoscaled to a
correlation matrix precisely so this bound applies), which yields a
feasible estimate together with a duality-gap certificate.  If phase 1
stabilizes while the covariance is still numerically singular the fit
stops with the stuck_singular status -- the estimate may simply not
exist in that configuration.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from . import numkernel as nk
from .errors import (CertificateViolated, LocalMarginalSingular,
                     NegativeEigenvalue, NonFiniteResult, NonpositiveSchur,
                     NotPositiveDefinite)
from .existence import check_existence, decomposable_mle, is_decomposable
from .graph import Graph
from .likelihood import (SampleStats, dual_bound, duality_gap, loglik,
                         to_correlation, unscale_concentration)
from .report import (FitReport, STATUS_CONVERGED, STATUS_MAX_CYCLES,
                     STATUS_STUCK_SINGULAR)

__all__ = [
    "NcdConfig",
    "ncd_fit",
    "vertex_update",
    "k_track_update",
    "feasible_k",
    "skip_check",
]

START_POLICIES = ("from_s", "chordal", "user")

# Per-update rank tracking (one eigendecomposition per vertex step on the
# semidefinite path) is only affordable for small problems; above this
# order the rank is recorded once per sweep.
_RANK_PER_UPDATE_LIMIT = 64

# Noise floor for the semidefinite path: rank is measured and negative
# eigenvalues are tolerated at this relative scale.  Iterates that hover
# at a singular boundary point accumulate roundoff well below it as long
# as no solve amplifies by more than a factor _PSD_CLEAR / eps_machine.
_PSD_RTOL = 1e-8
# Spectrum classification for neighbourhood blocks on that path:
# eigenvalues below _PSD_ZERO (relative) are exact-zero directions of a
# rank-deficient block and are truncated; eigenvalues above _PSD_CLEAR
# are solvable with noise amplification at least tenfold below the rank
# measurement scale.  Anything in between cannot be told apart from
# roundoff reliably, so the semidefinite iteration refuses to continue
# (stuck_singular) rather than risk a spurious rank jump -- the
# singular-trap configurations drive blocks exactly into this zone.
_PSD_ZERO = 1e-11
_PSD_CLEAR = 1e-7


@dataclass
class NcdConfig:
    eps: float = 1e-3
    max_cycles: int = 50_000
    start_policy: str = "from_s"
    #: starting covariance for start_policy="user"; must be dually
    #: feasible (match S on diagonal and edges).
    start: np.ndarray | None = None
    allow_psd_start: bool = True
    #: rescale to a correlation matrix internally (and back on output).
    #: Disabling this also disables the positive-definiteness
    #: certificate for the projected concentration matrix.
    auto_scale: bool = True
    track_logdet: bool = False
    backend: str = "auto"

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be at least 1")
        if self.start_policy not in START_POLICIES:
            raise ValueError(f"start_policy must be one of {START_POLICIES}")


def vertex_update(Sigma, S, g: Graph, u: int, psd: bool = False):
    """One dual coordinate step at vertex u (pure).

    Returns (updated Sigma, beta, schur_value) where beta holds the
    regression coefficients of u on its neighbourhood and schur_value is
    the updated Schur complement S_uu - S_ub beta.  Only the
    non-neighbour entries of row/column u change; with psd=True the
    neighbourhood block is inverted through its pseudoinverse so
    semidefinite iterates are handled.
    """
    Sigma = np.array(Sigma, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    b = g.boundary(u)
    r = g.rest(u)
    if b.size:
        Sbb = Sigma[np.ix_(b, b)]
        sbu = S[b, u]
        if psd:
            beta = nk.gen_inverse(Sbb) @ sbu
        else:
            beta = nk.pd_solve(Sbb, sbu)
        schur = float(S[u, u] - S[u, b] @ beta)
        if r.size:
            vals = Sigma[np.ix_(r, b)] @ beta
            Sigma[r, u] = vals
            Sigma[u, r] = vals
    else:
        beta = np.zeros(0)
        schur = float(S[u, u])
        Sigma[r, u] = 0.0
        Sigma[u, r] = 0.0
    if not np.all(np.isfinite(Sigma)):
        raise NonFiniteResult("vertex update produced non-finite values")
    return Sigma, beta, schur


def k_track_update(K, Sigma, beta, g: Graph, u: int) -> np.ndarray:
    """Track the concentration matrix through a vertex update (pure).

    Given the post-update Sigma and the beta just produced by
    :func:`vertex_update`, rebuilds K = Sigma^{-1} without inverting
    anything beyond the scalar Schur complement: a rank-one downdate
    clears row/column u, then the new closure entries are written back.
    The non-neighbour entries of column u come out exactly zero.
    """
    K = np.array(K, dtype=np.float64)
    b = g.boundary(u)
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if beta.size != b.size:
        raise ValueError("beta length does not match the neighbourhood")
    schur = float(Sigma[u, u] - Sigma[u, b] @ beta) if b.size \
        else float(Sigma[u, u])
    if schur <= 0.0:
        raise NonpositiveSchur(
            f"vertex {u}: Schur complement {schur:g} <= 0")
    kuu_old = K[u, u]
    kold = K[:, u].copy()
    K -= np.outer(kold, kold / kuu_old)
    K[:, u] = 0.0
    K[u, :] = 0.0
    kuu_new = 1.0 / schur
    K[u, u] = kuu_new
    if b.size:
        kb = -beta * kuu_new
        K[b, u] = kb
        K[u, b] = kb
        K[np.ix_(b, b)] += np.outer(beta, beta) * kuu_new
    return K


def feasible_k(K, g: Graph, require_pd: bool = True) -> np.ndarray:
    """Zero the off-pattern entries of K and certify the result.

    With correlation scaling and the iteration run until the off-pattern
    column sums are below 1/d, the projection is guaranteed positive
    definite; a violation therefore raises CertificateViolated rather
    than being returned silently.  require_pd=False skips the check (for
    unscaled expert runs where the bound does not apply).
    """
    Kc = nk.pattern_project(K, g)
    if require_pd and nk.min_eig(Kc) <= 0.0:
        raise CertificateViolated(
            "projected concentration matrix is not positive definite; "
            "termination tolerance was too loose for this problem")
    return Kc


def skip_check(K, g: Graph, u: int, tol: float) -> bool:
    """True when the 1-norm of K's non-neighbour column at u is below
    tol, i.e. the update of u is currently ignorable.  The maximum of
    the per-vertex norms equals the max column sum of K - K(pattern)."""
    col = K[:, u]
    b = g.boundary(u)
    norm = float(np.sum(np.abs(col)) - abs(col[u]) - np.sum(np.abs(col[b])))
    return norm < tol


def _offpattern_colsum(K, g: Graph) -> float:
    return nk.max_colsum(K - nk.pattern_project(K, g))


def _psd_sigma_cycle(Sigma, g: Graph, rank_trace, per_update: bool):
    """Covariance sweep on the semidefinite path.

    Neighbourhood blocks are always inverted through the pseudoinverse
    at the path's noise floor, never by Cholesky, so rank-deficient
    iterates cannot gain rank through roundoff amplification.
    """
    d = g.d
    for u in range(d):
        b = g.adj[u]
        if b.size == d - 1:
            continue
        r = g.rest(u)
        if b.size == 0:
            Sigma[r, u] = 0.0
            Sigma[u, r] = 0.0
        else:
            Sbb = Sigma[np.ix_(b, b)]
            beta = nk.gen_inverse(Sbb, rel_tol=_PSD_RTOL) @ Sigma[b, u]
            vals = Sigma[np.ix_(r, b)] @ beta
            Sigma[r, u] = vals
            Sigma[u, r] = vals
        if per_update:
            rank_trace.append(nk.rank_tol(Sigma, rel_tol=_PSD_RTOL))


def _resolve_start(stats: SampleStats, g: Graph, cfg: NcdConfig):
    if cfg.start_policy == "user":
        if cfg.start is None:
            raise ValueError("start_policy='user' requires cfg.start")
        Sigma = nk.check_symmetric(cfg.start)
        dev = nk.max_abs_dev(nk.pattern_project(Sigma - stats.S, g))
        if dev > 1e-8:
            raise ValueError(
                f"starting value is not dually feasible (deviation {dev:g})")
        # snap the constrained entries exactly onto S
        Sigma -= nk.pattern_project(Sigma - stats.S, g)
        return Sigma
    if cfg.start_policy == "chordal" and is_decomposable(g):
        try:
            K0 = decomposable_mle(stats, g)
            return nk.pd_inverse(K0)
        except (LocalMarginalSingular, NotPositiveDefinite):
            pass  # singular clique marginals: fall back to S
    return stats.S.copy()


def ncd_fit(stats: SampleStats, g: Graph, cfg: NcdConfig | None = None,
            existence: bool = True) -> FitReport:
    """Fit the model by neighbourhood coordinate descent on the dual."""
    cfg = cfg if cfg is not None else NcdConfig()
    if g.d != stats.d:
        raise ValueError("graph and covariance orders do not match")
    kern = backend.resolve(cfg.backend)
    d, n = g.d, stats.n
    eps_prime = 2.0 * cfg.eps / n
    eps2 = min(eps_prime, 1.0 / d)

    t0 = time.perf_counter()
    work = stats if (stats.scaled_to_correlation or not cfg.auto_scale) \
        else to_correlation(stats)
    Sigma = _resolve_start(work, g, cfg)
    Sigma = np.ascontiguousarray(Sigma)

    rank0 = nk.rank_tol(Sigma, rel_tol=_PSD_RTOL)
    psd_mode = rank0 < d
    if psd_mode and not cfg.allow_psd_start:
        raise NotPositiveDefinite(
            f"starting covariance has numerical rank {rank0} < {d}")
    rank_trace = [rank0]
    per_update_rank = d <= _RANK_PER_UPDATE_LIMIT
    logdet_trace: list[float] = [] if cfg.track_logdet else None
    indptr, indices = g.adj_indptr, g.adj_indices
    setup_time = time.perf_counter() - t0

    cycles_p1 = 0
    cycles_p2 = 0
    stable = False
    t1 = time.perf_counter()

    def record_logdet():
        if cfg.track_logdet:
            sign, ld = np.linalg.slogdet(Sigma)
            logdet_trace.append(ld if sign > 0 else -math.inf)

    record_logdet()
    left_psd_cone = False
    while cycles_p1 + cycles_p2 < cfg.max_cycles:
        prev = Sigma.copy()
        if psd_mode:
            try:
                _psd_sigma_cycle(Sigma, g, rank_trace, per_update_rank)
            except NegativeEigenvalue:
                # the iterate drifted out of the semidefinite cone beyond
                # the noise floor: treat like a singular dead end
                left_psd_cone = True
                break
            rank = nk.rank_tol(Sigma, rel_tol=_PSD_RTOL)
            if not per_update_rank:
                rank_trace.append(rank)
            if rank == d:
                psd_mode = False
        else:
            if cfg.track_logdet:
                # per-update determinant trace needs the slow path
                for u in range(d):
                    Sigma, _, _ = vertex_update(Sigma, work.S, g, u)
                    record_logdet()
            else:
                try:
                    kern.ncd_sigma_cycle(Sigma, indptr, indices)
                except NotPositiveDefinite:
                    psd_mode = True
                    continue
        cycles_p1 += 1
        if nk.max_colsum(Sigma - prev) < eps_prime:
            stable = True
            break

    def build_report(status, K_hat=None, Sigma_final=None, grad=None,
                     gap=None, bound=None, ll=None):
        wall = time.perf_counter() - t1
        conv = status == STATUS_CONVERGED
        return FitReport(
            algorithm="ncd", converged=conv, status=status,
            cycles=cycles_p1 + cycles_p2, wall_time=wall,
            setup_time=setup_time, eps=cfg.eps, eps_prime=eps_prime,
            eps_dprime=eps2, n=n, d=d, backend=kern.BACKEND_NAME,
            loglik=ll, grad_norm=grad, dual_bound=bound, duality_gap=gap,
            cycles_phase1=cycles_p1, cycles_phase2=cycles_p2,
            rank_trace=rank_trace, logdet_trace=logdet_trace,
            existence=check_existence(g, stats) if existence else None,
            K_hat=K_hat, Sigma_hat=Sigma_final)

    def unscale_sigma(Sig):
        if work.correlation_scale is None:
            return (Sig + Sig.T) / 2.0
        s = work.correlation_scale
        return (Sig * np.outer(s, s) + (Sig * np.outer(s, s)).T) / 2.0

    if left_psd_cone:
        warnings.warn(
            "covariance iterate left the semidefinite cone beyond the noise "
            "floor; the maximum likelihood estimate may not exist for this "
            "graph and sample", RuntimeWarning, stacklevel=2)
        return build_report(STATUS_STUCK_SINGULAR,
                            Sigma_final=unscale_sigma(Sigma))
    if not stable:
        warnings.warn(
            f"covariance updates did not stabilize within {cfg.max_cycles} "
            "cycles", RuntimeWarning, stacklevel=2)
        return build_report(STATUS_MAX_CYCLES, Sigma_final=unscale_sigma(Sigma))

    mineig = nk.min_eig(Sigma)
    if mineig <= eps_prime:
        warnings.warn(
            f"covariance iterate stabilized but stayed numerically singular "
            f"(min eigenvalue {mineig:g}); the maximum likelihood estimate "
            "may not exist for this graph and sample", RuntimeWarning,
            stacklevel=2)
        return build_report(STATUS_STUCK_SINGULAR,
                            Sigma_final=unscale_sigma(Sigma))

    # phase 2: track K alongside Sigma until the off-pattern column sums
    # are below eps2
    K = nk.pd_inverse(Sigma)
    converged = False
    while cycles_p1 + cycles_p2 < cfg.max_cycles:
        if cfg.track_logdet:
            performed = _tracked_k_cycle(Sigma, K, work.S, g, eps2,
                                         record_logdet)
        else:
            performed = kern.ncd_k_cycle(Sigma, K, indptr, indices, eps2)
        cycles_p2 += 1
        if performed == 0:
            # verify against an exact inversion before declaring victory
            K = nk.pd_inverse(Sigma)
            if _offpattern_colsum(K, g) <= eps2:
                converged = True
                break
    if not converged:
        warnings.warn(
            f"concentration tracking did not reach tolerance {eps2:g} "
            f"within {cfg.max_cycles} cycles", RuntimeWarning, stacklevel=2)
        return build_report(STATUS_MAX_CYCLES,
                            K_hat=unscale_concentration(K, work),
                            Sigma_final=unscale_sigma(Sigma),
                            grad=_offpattern_colsum(K, g))

    grad = _offpattern_colsum(K, g)
    K_check = feasible_k(K, g, require_pd=cfg.auto_scale)
    K_check_orig = unscale_concentration(K_check, work)
    Sigma_orig = unscale_sigma(Sigma)
    ll = gap = bound = None
    try:
        ll = loglik(K_check_orig, stats)
        bound = dual_bound(Sigma_orig, stats)
        gap = duality_gap(K_check_orig, Sigma_orig, stats)
    except NotPositiveDefinite:
        # only reachable with auto_scale disabled and an indefinite
        # projection; report the raw estimate without certificates
        pass
    return build_report(STATUS_CONVERGED, K_hat=K_check_orig,
                        Sigma_final=Sigma_orig, grad=grad, gap=gap,
                        bound=bound, ll=ll)


def _tracked_k_cycle(Sigma, K, S, g: Graph, eps2, record_logdet):
    """Slow-path phase-2 sweep used when per-update determinant traces
    are requested."""
    performed = 0
    for u in range(g.d):
        if g.degree(u) == g.d - 1:
            continue
        if skip_check(K, g, u, eps2):
            continue
        new_sigma, beta, _ = vertex_update(Sigma, S, g, u)
        Sigma[...] = new_sigma
        K[...] = k_track_update(K, Sigma, beta, g, u)
        record_logdet()
        performed += 1
    return performed
