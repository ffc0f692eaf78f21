"""Pure-NumPy update kernels.

Reference implementations of the per-cycle inner loops; the compiled
module ggmfit._kernels mirrors these signatures exactly.  All functions
mutate their matrix arguments in place.

Update-set systems are passed in CSR-like form: ``set_off`` delimits
``set_idx`` (vertex indices per set), ``blk_off`` delimits the flattened
per-set marginal blocks ``scc`` / ``scc_inv`` with their log
determinants in ``scc_logdet``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from .errors import NonFiniteResult, NonpositiveSchur, NotPositiveDefinite

BACKEND_NAME = "python"


def _chol(M):
    try:
        return linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def ips_cov_cycle(K, Sigma, set_off, set_idx, blk_off, scc, scc_inv,
                  scc_logdet, eps_prime, half_n, track):
    """One covariance-version sweep over the update sets.

    Per set c: skip when the marginal deviation is below eps_prime, else
    match the covariance marginal to the empirical one and apply the
    compensating concentration update.  Only the c block of K changes;
    Sigma is updated as a whole through a rank-|c| correction, so no
    matrix larger than |c| x |c| is ever inverted.

    Returns (performed, loglik_delta_sum, min_delta).
    """
    performed = 0
    delta_sum = 0.0
    min_delta = math.inf
    nsets = len(set_off) - 1
    for i in range(nsets):
        c = set_idx[set_off[i]:set_off[i + 1]]
        k = len(c)
        Scc = scc[blk_off[i]:blk_off[i + 1]].reshape(k, k)
        Scc_inv = scc_inv[blk_off[i]:blk_off[i + 1]].reshape(k, k)
        cc = np.ix_(c, c)
        sig_cc = Sigma[cc]
        if np.max(np.abs(sig_cc - Scc)) < eps_prime:
            continue
        cf = _chol(sig_cc)
        logdet_sig = 2.0 * float(np.sum(np.log(np.diagonal(cf[0]))))
        M = linalg.cho_solve(cf, np.eye(k), check_finite=False)
        M = (M + M.T) / 2.0
        K[cc] += Scc_inv - M
        if track:
            tr_a = float(np.sum(M * Scc))
            delta = half_n * (tr_a - (scc_logdet[i] - logdet_sig) - k)
            delta_sum += delta
            min_delta = min(min_delta, delta)
        H = M - (M @ Scc) @ M
        H = (H + H.T) / 2.0
        W = Sigma[:, c].copy()
        Sigma -= (W @ H) @ W.T
        performed += 1
    return performed, delta_sum, min_delta


def ips_con_cycle(K, set_off, set_idx, blk_off, scc, scc_inv, scc_logdet,
                  half_n, track):
    """One concentration-version sweep: every set is updated.

    Per set c the correction L = K_ca (K_aa)^{-1} K_ac is computed by a
    Cholesky solve with the complementary block, so the covariance never
    needs to be stored.  Returns (loglik_delta_sum, min_delta).
    """
    d = K.shape[0]
    delta_sum = 0.0
    min_delta = math.inf
    nsets = len(set_off) - 1
    mask = np.ones(d, dtype=bool)
    for i in range(nsets):
        c = set_idx[set_off[i]:set_off[i + 1]]
        k = len(c)
        Scc = scc[blk_off[i]:blk_off[i + 1]].reshape(k, k)
        Scc_inv = scc_inv[blk_off[i]:blk_off[i + 1]].reshape(k, k)
        cc = np.ix_(c, c)
        mask[c] = False
        a = np.flatnonzero(mask)
        mask[c] = True
        if a.size:
            Kac = K[np.ix_(a, c)]
            X = linalg.cho_solve(_chol(K[np.ix_(a, a)]), Kac,
                                 check_finite=False)
            L = Kac.T @ X
            L = (L + L.T) / 2.0
        else:
            L = np.zeros((k, k))
        sig_cc_inv = K[cc] - L
        K[cc] = Scc_inv + L
        if track:
            cf = _chol(sig_cc_inv)
            logdet_sig_inv = 2.0 * float(np.sum(np.log(np.diagonal(cf[0]))))
            tr_a = float(np.sum(sig_cc_inv * Scc))
            delta = half_n * (tr_a - (scc_logdet[i] + logdet_sig_inv) - k)
            delta_sum += delta
            min_delta = min(min_delta, delta)
    return delta_sum, min_delta


def _vertex_solve(Sigma, b, u):
    """Regression coefficients of u on its neighbourhood, from the
    current covariance."""
    Sbb = Sigma[np.ix_(b, b)]
    sbu = Sigma[b, u]
    beta = linalg.cho_solve(_chol(Sbb), sbu, check_finite=False)
    return beta


def ncd_sigma_cycle(Sigma, adj_indptr, adj_indices):
    """One dual sweep over the vertices (positive definite path).

    For each vertex the non-neighbour entries of its row/column are
    replaced by the regression predictions from the neighbourhood; all
    other entries, in particular the dual-feasible ones, are untouched.
    """
    d = Sigma.shape[0]
    mask = np.ones(d, dtype=bool)
    for u in range(d):
        b = adj_indices[adj_indptr[u]:adj_indptr[u + 1]]
        if len(b) == d - 1:
            continue
        mask[u] = False
        mask[b] = False
        r = np.flatnonzero(mask)
        mask[u] = True
        mask[b] = True
        if len(b) == 0:
            Sigma[r, u] = 0.0
            Sigma[u, r] = 0.0
            continue
        beta = _vertex_solve(Sigma, b, u)
        vals = Sigma[np.ix_(r, b)] @ beta
        Sigma[r, u] = vals
        Sigma[u, r] = vals
    if not np.all(np.isfinite(Sigma)):
        raise NonFiniteResult("covariance update produced non-finite values")


def ncd_k_cycle(Sigma, K, adj_indptr, adj_indices, eps2):
    """One dual sweep updating the tracked concentration matrix as well.

    A vertex is skipped when the 1-norm of its non-neighbour
    concentration column is already below eps2; the sweep returns how
    many vertices were actually updated, so a return of 0 certifies
    max-colsum feasibility at eps2.
    """
    d = Sigma.shape[0]
    performed = 0
    for u in range(d):
        b = adj_indices[adj_indptr[u]:adj_indptr[u + 1]]
        if len(b) == d - 1:
            continue
        kcol = K[:, u]
        norm_ru = float(np.sum(np.abs(kcol)) - abs(kcol[u])
                        - np.sum(np.abs(kcol[b])))
        if norm_ru < eps2:
            continue
        performed += 1
        # covariance part
        if len(b):
            beta = _vertex_solve(Sigma, b, u)
            mask = np.ones(d, dtype=bool)
            mask[u] = False
            mask[b] = False
            r = np.flatnonzero(mask)
            vals = Sigma[np.ix_(r, b)] @ beta
            Sigma[r, u] = vals
            Sigma[u, r] = vals
            schur = float(Sigma[u, u] - Sigma[u, b] @ beta)
        else:
            beta = np.zeros(0)
            suu = float(Sigma[u, u])
            Sigma[:, u] = 0.0
            Sigma[u, :] = 0.0
            Sigma[u, u] = suu
            schur = suu
        if schur <= 0.0:
            raise NonpositiveSchur(
                f"vertex {u}: updated Schur complement {schur:g} <= 0")
        # concentration part: rank-one downdate removes row/column u,
        # then the new closure entries are written back
        kuu_old = kcol[u]
        kold = kcol.copy()
        K -= np.outer(kold, kold / kuu_old)
        K[:, u] = 0.0
        K[u, :] = 0.0
        kuu_new = 1.0 / schur
        K[u, u] = kuu_new
        if len(b):
            kb = -beta * kuu_new
            K[b, u] = kb
            K[u, b] = kb
            K[np.ix_(b, b)] += np.outer(beta, beta) * kuu_new
    return performed
