"""Iterative proportional scaling for Gaussian graphical models.

Two variants of the same fixed-point iteration over complete vertex
sets:

* concentration: the correction L = K_ca (K_aa)^{-1} K_ac is computed
  from the concentration matrix alone, so the covariance never has to be
  stored, at the price of one large Cholesky solve per update;
* covariance: L = K_cc - (Sigma_cc)^{-1} needs only the small marginal
  of the covariance, which is kept consistent with K through a rank-|c|
  correction, so no large matrix is ever inverted.

Update sets are either the edges (plus singletons for isolated vertices,
so the diagonal equations stay covered) or the maximal cliques.  The
iteration starts from the identity, keeps the zero pattern of K exact at
all times, and stops on the gradient criterion: the maximum absolute
deviation of Sigma from S over the diagonal and the edges must drop to
2 eps / n.  Changes in the log-likelihood between cycles are reported
for diagnosis but never used for termination; they can become tiny while
the gradient is still large.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from . import numkernel as nk
from .errors import LocalMarginalSingular, NotPositiveDefinite
from .existence import check_existence
from .graph import Graph, cliques
from .likelihood import SampleStats, loglik
from .report import (FitReport, STATUS_CONVERGED, STATUS_MAX_CYCLES)

__all__ = [
    "IpsConfig",
    "IpsState",
    "ips_fit",
    "ips_update_con",
    "ips_update_cov",
    "loglik_delta",
    "build_update_sets",
]

VARIANTS = ("covariance", "concentration")
SET_SYSTEMS = ("edges", "cliques")


@dataclass
class IpsConfig:
    """Solver options.

    eps is the gradient tolerance; the effective threshold on the
    pattern deviation is 2 eps / n, computed at fit time.
    """

    variant: str = "covariance"
    update_sets: str = "edges"
    eps: float = 1e-3
    max_cycles: int = 50_000
    track_loglik: bool = True
    record_grad_trace: bool = False
    #: optional user-supplied starting concentration matrix (positive
    #: definite, zero outside the pattern); identity when None.
    start: np.ndarray | None = None
    backend: str = "auto"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.update_sets not in SET_SYSTEMS:
            raise ValueError(f"update_sets must be one of {SET_SYSTEMS}")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be at least 1")


@dataclass
class IpsState:
    """Evolving iterate: concentration matrix, covariance (covariance
    variant only), running log-likelihood and counters."""

    K: np.ndarray
    Sigma: np.ndarray | None
    loglik: float
    cycle: int = 0
    updates_performed: int = 0
    updates_skipped: int = 0


def build_update_sets(g: Graph, system: str) -> list[np.ndarray]:
    """Update sets in fixed ascending (lexicographic) order.

    "edges": one set per edge plus a singleton for every isolated
    vertex; "cliques": the maximal cliques.  Either system covers every
    diagonal and edge constraint.
    """
    if system == "edges":
        out = [(u, v) for u, v in g.edges]
        out += [(v,) for v in range(g.d) if g.degree(v) == 0]
        return [np.asarray(s, dtype=np.intp) for s in sorted(out)]
    if system == "cliques":
        return [np.asarray(c, dtype=np.intp) for c in cliques(g)]
    raise ValueError(f"unknown update-set system {system!r}")


def _marginal_blocks(S, sets):
    """Flattened per-set marginals S_cc, their inverses and log dets.

    Stored once before iterating; the covariance matrix itself is not
    needed afterwards.  Raises LocalMarginalSingular when a marginal is
    not positive definite.
    """
    nsets = len(sets)
    sizes = np.array([len(c) for c in sets], dtype=np.int64)
    set_off = np.zeros(nsets + 1, dtype=np.int32)
    np.cumsum(sizes, out=set_off[1:])
    set_idx = (np.concatenate(sets).astype(np.int32) if nsets
               else np.zeros(0, dtype=np.int32))
    blk_off = np.zeros(nsets + 1, dtype=np.int64)
    np.cumsum(sizes * sizes, out=blk_off[1:])
    scc = np.empty(int(blk_off[-1]))
    scc_inv = np.empty_like(scc)
    scc_logdet = np.empty(nsets)
    for i, c in enumerate(sets):
        blk = S[np.ix_(c, c)]
        k = len(c)
        if k == 1:
            v = blk[0, 0]
            if not v > 0.0:
                raise LocalMarginalSingular(c)
            inv = np.array([[1.0 / v]])
            ld = math.log(v)
        elif k == 2:
            det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
            if not (det > 0.0 and blk[0, 0] > 0.0):
                raise LocalMarginalSingular(c)
            inv = np.array([[blk[1, 1], -blk[0, 1]],
                            [-blk[1, 0], blk[0, 0]]]) / det
            ld = math.log(det)
        else:
            try:
                inv = nk.pd_inverse(blk)
                ld = nk.logdet_pd(blk)
            except NotPositiveDefinite:
                raise LocalMarginalSingular(c) from None
        scc[blk_off[i]:blk_off[i + 1]] = blk.ravel()
        scc_inv[blk_off[i]:blk_off[i + 1]] = inv.ravel()
        scc_logdet[i] = ld
    return set_off, set_idx, blk_off, scc, scc_inv, scc_logdet


def loglik_delta(sigma_cc, scc, n: int) -> float:
    """Log-likelihood increase from matching one marginal.

    (n/2){trace(A) - log det(A) - |c|} with A = (Sigma_cc)^{-1} S_cc;
    nonnegative for any positive definite pair.
    """
    sigma_cc = np.atleast_2d(np.asarray(sigma_cc, dtype=np.float64))
    scc = np.atleast_2d(np.asarray(scc, dtype=np.float64))
    k = sigma_cc.shape[0]
    M = nk.pd_inverse(sigma_cc)
    tr_a = float(np.sum(M * scc))
    logdet_a = nk.logdet_pd(scc) - nk.logdet_pd(sigma_cc)
    return 0.5 * n * (tr_a - logdet_a - k)


def ips_update_con(K, c, scc_inv) -> np.ndarray:
    """One concentration-version update of the set c (pure).

    Replaces K_cc by (S_cc)^{-1} + K_ca (K_aa)^{-1} K_ac; afterwards the
    marginal of K^{-1} on c equals S_cc.
    """
    K = np.array(K, dtype=np.float64)
    d = K.shape[0]
    c = nk.as_index_set(c, d)
    scc_inv = np.atleast_2d(np.asarray(scc_inv, dtype=np.float64))
    a = nk.complement(c, d)
    if a.size:
        Kac = K[np.ix_(a, c)]
        L = Kac.T @ nk.pd_solve(K[np.ix_(a, a)], Kac)
        L = (L + L.T) / 2.0
    else:
        L = np.zeros((len(c), len(c)))
    K[np.ix_(c, c)] = scc_inv + L
    return K


def ips_update_cov(state: IpsState, c, scc, scc_inv) -> IpsState:
    """One covariance-version update of the set c (pure).

    Applies the same concentration change as the concentration version
    but derives the correction from (Sigma_cc)^{-1}, then restores the
    consistency Sigma = K^{-1} through a rank-|c| adjustment of Sigma.
    The loglik field is left untouched; combine with
    :func:`loglik_delta` for incremental bookkeeping.
    """
    K = np.array(state.K, dtype=np.float64)
    Sigma = np.array(state.Sigma, dtype=np.float64)
    d = K.shape[0]
    c = nk.as_index_set(c, d)
    scc = np.atleast_2d(np.asarray(scc, dtype=np.float64))
    scc_inv = np.atleast_2d(np.asarray(scc_inv, dtype=np.float64))
    cc = np.ix_(c, c)
    M = nk.pd_inverse(Sigma[cc])
    K[cc] += scc_inv - M
    H = M - (M @ scc) @ M
    H = (H + H.T) / 2.0
    W = Sigma[:, c].copy()
    Sigma -= (W @ H) @ W.T
    return replace(state, K=K, Sigma=Sigma,
                   updates_performed=state.updates_performed + 1)


def _pattern_dev(Sigma, S, eu, ev):
    """Max absolute deviation over the diagonal and the edges."""
    dev = float(np.max(np.abs(np.diagonal(Sigma) - np.diagonal(S))))
    if eu.size:
        dev = max(dev, float(np.max(np.abs(Sigma[eu, ev] - S[eu, ev]))))
    return dev


def ips_fit(stats: SampleStats, g: Graph, cfg: IpsConfig | None = None,
            existence: bool = True) -> FitReport:
    """Fit the model by iterative proportional scaling.

    Starts from the identity (provably convergent whenever the estimate
    exists) unless cfg.start supplies a pattern-feasible positive
    definite matrix.  Cycles through the update sets in fixed ascending
    order; ineffective updates (marginal deviation already below
    2 eps / n) are skipped in the covariance variant.  After every cycle
    the gradient criterion is evaluated -- directly from the maintained
    Sigma for the covariance variant, from a fresh inversion of K for
    the concentration variant.  On a candidate exit of the covariance
    variant the criterion is re-verified from an exact inversion, so
    accumulated drift can never produce a false convergence flag.
    """
    cfg = cfg if cfg is not None else IpsConfig()
    if g.d != stats.d:
        raise ValueError("graph and covariance orders do not match")
    kern = backend.resolve(cfg.backend)
    d, n = g.d, stats.n
    eps_prime = 2.0 * cfg.eps / n
    half_n = 0.5 * n

    t0 = time.perf_counter()
    sets = build_update_sets(g, cfg.update_sets)
    blocks = _marginal_blocks(stats.S, sets)
    set_off, set_idx, blk_off, scc, scc_inv, scc_logdet = blocks
    nsets = len(sets)
    setup_time = time.perf_counter() - t0

    if cfg.start is not None:
        K = nk.check_symmetric(cfg.start)
        off = K - nk.pattern_project(K, g)
        if nk.max_abs_dev(off) > 1e-12:
            raise ValueError("starting value violates the zero pattern")
        K = nk.pattern_project(K, g)
        Sigma = nk.pd_inverse(K)  # raises NotPositiveDefinite if invalid
        ll = loglik(K, stats)
    else:
        K = np.eye(d)
        Sigma = np.eye(d)
        ll = -half_n * float(np.trace(stats.S))

    covariance = cfg.variant == "covariance"
    eu, ev = (np.array(g.edges, dtype=np.intp).T if g.edges
              else (np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)))

    loglik_trace: list[float] = []
    grad_trace: list[float] = []
    min_delta = math.inf
    performed_total = 0
    skipped_total = 0
    k_scale_first = None
    converged = False
    grad = math.inf
    cycle = 0

    t1 = time.perf_counter()
    while cycle < cfg.max_cycles:
        cycle += 1
        if covariance:
            performed, dsum, dmin = kern.ips_cov_cycle(
                K, Sigma, set_off, set_idx, blk_off, scc, scc_inv,
                scc_logdet, eps_prime, half_n, cfg.track_loglik)
            skipped_total += nsets - performed
        else:
            dsum, dmin = kern.ips_con_cycle(
                K, set_off, set_idx, blk_off, scc, scc_inv, scc_logdet,
                half_n, cfg.track_loglik)
            performed = nsets
        performed_total += performed
        if cfg.track_loglik:
            ll += dsum
            min_delta = min(min_delta, dmin)
            loglik_trace.append(ll)

        if covariance:
            grad = _pattern_dev(Sigma, stats.S, eu, ev)
        else:
            Sigma = nk.pd_inverse(K)
            grad = _pattern_dev(Sigma, stats.S, eu, ev)
        if cfg.record_grad_trace:
            grad_trace.append(grad)
        if cycle == 1:
            k_scale_first = nk.max_abs_dev(K)

        if grad <= eps_prime:
            if covariance:
                # guard against drift of the maintained Sigma
                Sigma = nk.pd_inverse(K)
                grad = _pattern_dev(Sigma, stats.S, eu, ev)
                if grad > eps_prime:
                    continue
            converged = True
            break
    wall_time = time.perf_counter() - t1

    if covariance and not converged:
        Sigma = nk.pd_inverse(K)
        grad = _pattern_dev(Sigma, stats.S, eu, ev)

    K = (K + K.T) / 2.0
    Sigma = (Sigma + Sigma.T) / 2.0
    status = STATUS_CONVERGED if converged else STATUS_MAX_CYCLES
    diverging = bool(not converged and k_scale_first is not None
                     and nk.max_abs_dev(K) > 1e6 * max(1.0, k_scale_first))
    if not converged:
        warnings.warn(
            f"scaling algorithm did not reach gradient {eps_prime:g} within "
            f"{cfg.max_cycles} cycles (final {grad:g})", RuntimeWarning,
            stacklevel=2)

    variant_id = "ips-cov" if covariance else "ips-con"
    return FitReport(
        algorithm=variant_id,
        converged=converged,
        status=status,
        cycles=cycle,
        wall_time=wall_time,
        setup_time=setup_time,
        eps=cfg.eps,
        eps_prime=eps_prime,
        n=n,
        d=d,
        backend=kern.BACKEND_NAME,
        loglik=loglik(K, stats),
        grad_norm=grad,
        update_sets=cfg.update_sets,
        updates_performed=performed_total,
        updates_skipped=skipped_total,
        loglik_trace=loglik_trace if cfg.track_loglik else None,
        grad_trace=grad_trace if cfg.record_grad_trace else None,
        min_update_delta=(None if not cfg.track_loglik
                          or min_delta is math.inf else min_delta),
        divergence_suspected=diverging,
        existence=check_existence(g, stats) if existence else None,
        K_hat=K,
        Sigma_hat=Sigma,
    )
