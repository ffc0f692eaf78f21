# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled update kernels.

Same contracts as ggmfit._kernels_py; see that module for the
documentation.  Small marginal blocks are factorized with LAPACK, the
rank-|c| covariance corrections and the rank-one concentration updates
run through BLAS / tight C loops, and all buffers are reused across the
sets of one sweep.

Matrices are C-contiguous float64 and mutated in place.  Every matrix
handed to LAPACK here is symmetric, so the row/column-major distinction
collapses and no transposition copies are needed.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, log
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dpotrf, dpotri, dpotrs

from .errors import NonFiniteResult, NonpositiveSchur, NotPositiveDefinite

cnp.import_array()

BACKEND_NAME = "compiled"

ctypedef cnp.int32_t i32
ctypedef cnp.int64_t i64


cdef inline int _chol(double* a, int k) noexcept nogil:
    """In-place Cholesky of a symmetric k x k buffer; 0 on success."""
    cdef int info = 0
    cdef char uplo = b'L'
    dpotrf(&uplo, &k, a, &k, &info)
    return info


cdef inline void _chol_solve(double* a, int k, double* b, int nrhs) noexcept nogil:
    cdef int info = 0
    cdef char uplo = b'L'
    dpotrs(&uplo, &k, &nrhs, a, &k, b, &k, &info)


cdef inline double _chol_logdet(double* a, int k) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(k):
        s += log(a[i * k + i])
    return 2.0 * s


cdef inline void _chol_inverse(double* a, int k) noexcept nogil:
    """Finish dpotri from a Cholesky factor and mirror to a full matrix."""
    cdef int info = 0
    cdef char uplo = b'L'
    cdef int i, j
    dpotri(&uplo, &k, a, &k, &info)
    for i in range(k):
        for j in range(i + 1, k):
            a[j * k + i] = a[i * k + j]


def ips_cov_cycle(double[:, ::1] K, double[:, ::1] Sigma,
                  const i32[::1] set_off, const i32[::1] set_idx,
                  const i64[::1] blk_off, const double[::1] scc,
                  const double[::1] scc_inv, const double[::1] scc_logdet,
                  double eps_prime, double half_n, bint track):
    cdef int d = K.shape[0]
    cdef int nsets = set_off.shape[0] - 1
    cdef int i, k, p, q, v, kmax = 0
    for i in range(nsets):
        k = set_off[i + 1] - set_off[i]
        if k > kmax:
            kmax = k
    if kmax == 0:
        return 0, 0.0, np.inf
    cdef double[::1] sig = np.empty(kmax * kmax)
    cdef double[::1] m = np.empty(kmax * kmax)
    cdef double[::1] t = np.empty(kmax * kmax)
    cdef double[::1] h = np.empty(kmax * kmax)
    # W and U are packed (d, k) row-major per set, i.e. (k, d) for BLAS
    cdef double[::1] wbuf = np.empty(d * kmax)
    cdef double[::1] ubuf = np.empty(d * kmax)
    cdef const i32* cidx
    cdef const double* sccp
    cdef const double* sccinvp
    cdef int performed = 0
    cdef double delta_sum = 0.0
    cdef double min_delta = np.inf
    cdef double dev, x, logdet_sig, tr_a, delta, acc
    cdef double one = 1.0, neg = -1.0, zero = 0.0
    cdef char tT = b'T', tN = b'N'
    cdef long boff

    for i in range(nsets):
        k = set_off[i + 1] - set_off[i]
        cidx = &set_idx[set_off[i]]
        boff = blk_off[i]
        sccp = &scc[boff]
        sccinvp = &scc_inv[boff]

        # skip rule: marginal already matches within eps_prime
        dev = 0.0
        for p in range(k):
            for q in range(k):
                x = fabs(Sigma[cidx[p], cidx[q]] - sccp[p * k + q])
                if x > dev:
                    dev = x
        if dev < eps_prime:
            continue

        for p in range(k):
            for q in range(k):
                sig[p * k + q] = Sigma[cidx[p], cidx[q]]
        if _chol(&sig[0], k) != 0:
            raise NotPositiveDefinite(
                "covariance marginal lost positive definiteness")
        logdet_sig = _chol_logdet(&sig[0], k)
        for p in range(k * k):
            m[p] = sig[p]
        _chol_inverse(&m[0], k)

        # concentration correction on the c block
        for p in range(k):
            for q in range(k):
                K[cidx[p], cidx[q]] += sccinvp[p * k + q] - m[p * k + q]

        if track:
            tr_a = 0.0
            for p in range(k * k):
                tr_a += m[p] * sccp[p]
            delta = half_n * (tr_a - (scc_logdet[i] - logdet_sig) - k)
            delta_sum += delta
            if delta < min_delta:
                min_delta = delta

        # H = M - M Scc M  (symmetric, k x k)
        for p in range(k):
            for q in range(k):
                acc = 0.0
                for v in range(k):
                    acc += m[p * k + v] * sccp[v * k + q]
                t[p * k + q] = acc
        for p in range(k):
            for q in range(k):
                acc = 0.0
                for v in range(k):
                    acc += t[p * k + v] * m[v * k + q]
                h[p * k + q] = m[p * k + q] - acc
        for p in range(k):
            for q in range(p + 1, k):
                acc = 0.5 * (h[p * k + q] + h[q * k + p])
                h[p * k + q] = acc
                h[q * k + p] = acc

        # Sigma -= W H W^T with W = Sigma[:, c]
        for v in range(d):
            for p in range(k):
                wbuf[v * k + p] = Sigma[v, cidx[p]]
        # BLAS sees the packed buffers transposed: U^T = H W^T ...
        dgemm(&tN, &tN, &k, &d, &k, &one, &h[0], &k, &wbuf[0], &k,
              &zero, &ubuf[0], &k)
        # ... and Sigma^T -= W U^T
        dgemm(&tT, &tN, &d, &d, &k, &neg, &wbuf[0], &k, &ubuf[0], &k,
              &one, &Sigma[0, 0], &d)
        performed += 1

    return performed, delta_sum, min_delta


def ips_con_cycle(double[:, ::1] K, const i32[::1] set_off,
                  const i32[::1] set_idx, const i64[::1] blk_off,
                  const double[::1] scc, const double[::1] scc_inv,
                  const double[::1] scc_logdet, double half_n, bint track):
    cdef int d = K.shape[0]
    cdef int nsets = set_off.shape[0] - 1
    cdef int i, k, p, q, v, mm, kmax = 0
    for i in range(nsets):
        k = set_off[i + 1] - set_off[i]
        if k > kmax:
            kmax = k
    if kmax == 0:
        return 0.0, np.inf
    cdef double[::1] kaa = np.empty(d * d)
    cdef double[::1] kac = np.empty(d * kmax)
    cdef double[::1] x = np.empty(d * kmax)
    cdef double[::1] lmat = np.empty(kmax * kmax)
    cdef double[::1] siginv = np.empty(kmax * kmax)
    cdef cnp.uint8_t[::1] inset = np.zeros(d, dtype=np.uint8)
    cdef i32[::1] comp = np.empty(d, dtype=np.int32)
    cdef const i32* cidx
    cdef const double* sccp
    cdef const double* sccinvp
    cdef double delta_sum = 0.0
    cdef double min_delta = np.inf
    cdef double acc, tr_a, delta, logdet_siginv
    cdef long boff

    for i in range(nsets):
        k = set_off[i + 1] - set_off[i]
        cidx = &set_idx[set_off[i]]
        boff = blk_off[i]
        sccp = &scc[boff]
        sccinvp = &scc_inv[boff]

        for p in range(k):
            inset[cidx[p]] = 1
        mm = 0
        for v in range(d):
            if not inset[v]:
                comp[mm] = v
                mm += 1
        for p in range(k):
            inset[cidx[p]] = 0

        if mm > 0:
            for p in range(mm):
                v = comp[p]
                for q in range(p, mm):
                    kaa[q * mm + p] = K[v, comp[q]]
                    kaa[p * mm + q] = kaa[q * mm + p]
            # right-hand sides K_ac, column-major (mm x k)
            for q in range(k):
                for p in range(mm):
                    kac[q * mm + p] = K[comp[p], cidx[q]]
                    x[q * mm + p] = kac[q * mm + p]
            if _chol(&kaa[0], mm) != 0:
                raise NotPositiveDefinite(
                    "complement block of K lost positive definiteness")
            _chol_solve(&kaa[0], mm, &x[0], k)
            # L = K_ca (K_aa)^{-1} K_ac, symmetrized
            for p in range(k):
                for q in range(p, k):
                    acc = 0.0
                    for v in range(mm):
                        acc += kac[p * mm + v] * x[q * mm + v]
                    lmat[p * k + q] = acc
                    lmat[q * k + p] = acc
        else:
            for p in range(k * k):
                lmat[p] = 0.0

        for p in range(k):
            for q in range(k):
                siginv[p * k + q] = K[cidx[p], cidx[q]] - lmat[p * k + q]
                K[cidx[p], cidx[q]] = sccinvp[p * k + q] + lmat[p * k + q]

        if track:
            tr_a = 0.0
            for p in range(k * k):
                tr_a += siginv[p] * sccp[p]
            if _chol(&siginv[0], k) != 0:
                raise NotPositiveDefinite(
                    "marginal concentration block not positive definite")
            logdet_siginv = _chol_logdet(&siginv[0], k)
            delta = half_n * (tr_a - (scc_logdet[i] + logdet_siginv) - k)
            delta_sum += delta
            if delta < min_delta:
                min_delta = delta

    return delta_sum, min_delta


cdef int _vertex_beta(double[:, ::1] Sigma, const i32* b, int k, int u,
                      double[::1] sbb, double[::1] beta) except -1:
    """beta = (Sigma_bb)^{-1} Sigma_bu via Cholesky; raises if not PD."""
    cdef int p, q
    for p in range(k):
        beta[p] = Sigma[b[p], u]
        for q in range(k):
            sbb[p * k + q] = Sigma[b[p], b[q]]
    if _chol(&sbb[0], k) != 0:
        raise NotPositiveDefinite(
            "neighbourhood covariance block not positive definite")
    _chol_solve(&sbb[0], k, &beta[0], 1)
    return 0


def ncd_sigma_cycle(double[:, ::1] Sigma, const i32[::1] adj_indptr,
                    const i32[::1] adj_indices):
    cdef int d = Sigma.shape[0]
    cdef int u, k, p, v
    cdef int kmax = 0
    for u in range(d):
        k = adj_indptr[u + 1] - adj_indptr[u]
        if k > kmax:
            kmax = k
    cdef double[::1] sbb = np.empty(kmax * kmax if kmax else 1)
    cdef double[::1] beta = np.empty(kmax if kmax else 1)
    cdef cnp.uint8_t[::1] inb = np.zeros(d, dtype=np.uint8)
    cdef const i32* b
    cdef double acc, bad = 0.0

    for u in range(d):
        k = adj_indptr[u + 1] - adj_indptr[u]
        if k == d - 1:
            continue
        if k == 0:
            for v in range(d):
                if v != u:
                    Sigma[v, u] = 0.0
                    Sigma[u, v] = 0.0
            continue
        b = &adj_indices[adj_indptr[u]]
        _vertex_beta(Sigma, b, k, u, sbb, beta)
        for p in range(k):
            inb[b[p]] = 1
        for v in range(d):
            if v == u or inb[v]:
                continue
            acc = 0.0
            for p in range(k):
                acc += Sigma[v, b[p]] * beta[p]
            Sigma[v, u] = acc
            Sigma[u, v] = acc
            bad += acc - acc  # stays 0 unless acc is inf or NaN
        for p in range(k):
            inb[b[p]] = 0
    if bad != bad:
        raise NonFiniteResult("covariance update produced non-finite values")


def ncd_k_cycle(double[:, ::1] Sigma, double[:, ::1] K,
                const i32[::1] adj_indptr, const i32[::1] adj_indices,
                double eps2):
    cdef int d = Sigma.shape[0]
    cdef int u, k, p, q, v
    cdef int kmax = 0
    for u in range(d):
        k = adj_indptr[u + 1] - adj_indptr[u]
        if k > kmax:
            kmax = k
    cdef double[::1] sbb = np.empty(kmax * kmax if kmax else 1)
    cdef double[::1] beta = np.empty(kmax if kmax else 1)
    cdef double[::1] kold = np.empty(d)
    cdef cnp.uint8_t[::1] inb = np.zeros(d, dtype=np.uint8)
    cdef const i32* b
    cdef int performed = 0
    cdef double norm_ru, schur, kuu_old, kuu_new, acc, tmp

    for u in range(d):
        k = adj_indptr[u + 1] - adj_indptr[u]
        if k == d - 1:
            continue

        # 1-norm of the non-neighbour part of column u
        norm_ru = 0.0
        for v in range(d):
            norm_ru += fabs(K[v, u])
        norm_ru -= fabs(K[u, u])
        for p in range(k):
            norm_ru -= fabs(K[adj_indices[adj_indptr[u] + p], u])
        if norm_ru < eps2:
            continue
        performed += 1

        # covariance step
        if k:
            b = &adj_indices[adj_indptr[u]]
            _vertex_beta(Sigma, b, k, u, sbb, beta)
            for p in range(k):
                inb[b[p]] = 1
            schur = Sigma[u, u]
            for p in range(k):
                schur -= Sigma[u, b[p]] * beta[p]
            for v in range(d):
                if v == u or inb[v]:
                    continue
                acc = 0.0
                for p in range(k):
                    acc += Sigma[v, b[p]] * beta[p]
                Sigma[v, u] = acc
                Sigma[u, v] = acc
            for p in range(k):
                inb[b[p]] = 0
        else:
            b = NULL
            schur = Sigma[u, u]
            for v in range(d):
                if v != u:
                    Sigma[v, u] = 0.0
                    Sigma[u, v] = 0.0
        if schur <= 0.0:
            raise NonpositiveSchur(
                f"vertex {u}: updated Schur complement {schur:g} <= 0")

        # concentration step: rank-one downdate clears row/column u
        kuu_old = K[u, u]
        for v in range(d):
            kold[v] = K[v, u]
        for v in range(d):
            tmp = kold[v] / kuu_old
            if tmp != 0.0:
                for q in range(d):
                    K[v, q] -= tmp * kold[q]
        for v in range(d):
            K[v, u] = 0.0
            K[u, v] = 0.0
        kuu_new = 1.0 / schur
        K[u, u] = kuu_new
        for p in range(k):
            tmp = -beta[p] * kuu_new
            K[b[p], u] = tmp
            K[u, b[p]] = tmp
        for p in range(k):
            tmp = beta[p] * kuu_new
            for q in range(k):
                K[b[p], b[q]] += tmp * beta[q]

    return performed
