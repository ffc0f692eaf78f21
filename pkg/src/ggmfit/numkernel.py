"""Dense symmetric linear algebra parameterized by index sets.

Symmetric matrices are plain float64 ndarrays kept exactly symmetric;
index sets are strictly increasing integer arrays.  Empty index sets
produce 0-dimensional blocks and all operations accept them, so callers
never special-case isolated vertices or empty complements.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import GraphFormatError, NotPositiveDefinite, NegativeEigenvalue

__all__ = [
    "REL_TOL",
    "check_symmetric",
    "as_index_set",
    "submatrix",
    "pd_solve",
    "pd_inverse",
    "gen_inverse",
    "schur",
    "schur_psd",
    "max_abs_dev",
    "max_colsum",
    "pattern_project",
    "logdet_pd",
    "min_eig",
    "rank_tol",
    "read_sym_matrix",
    "write_sym_matrix",
]

# Relative eigenvalue cutoff for pseudoinverses and numerical rank.  Two
# orders of magnitude below any stopping tolerance used by the solvers,
# so rank decisions never interact with convergence decisions.
REL_TOL = 1e-10


def check_symmetric(M, tol: float = 0.0) -> np.ndarray:
    """Validate symmetry within ``tol`` (absolute) and return a float64
    array that is exactly symmetric."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    dev = np.max(np.abs(M - M.T)) if M.size else 0.0
    if dev > tol:
        raise ValueError(f"matrix is not symmetric (max deviation {dev:g})")
    return (M + M.T) / 2.0 if dev > 0.0 else M.copy()


def as_index_set(idx, d: int) -> np.ndarray:
    """Validate a strictly increasing index set with entries in 0..d-1."""
    idx = np.asarray(idx, dtype=np.intp).ravel()
    if idx.size:
        if idx[0] < 0 or idx[-1] >= d:
            raise IndexError(f"index set {idx} out of range for order {d}")
        if np.any(np.diff(idx) <= 0):
            raise ValueError(f"index set {idx} is not strictly increasing")
    return idx


def complement(idx, d: int) -> np.ndarray:
    """Ascending complement of an index set in 0..d-1."""
    mask = np.ones(d, dtype=bool)
    mask[idx] = False
    return np.flatnonzero(mask)


def submatrix(M, rows, cols) -> np.ndarray:
    """The |rows| x |cols| block of M, rows/cols in the given orders."""
    M = np.asarray(M, dtype=np.float64)
    rows = as_index_set(rows, M.shape[0])
    cols = as_index_set(cols, M.shape[1])
    return M[np.ix_(rows, cols)]


def pd_solve(M, B) -> np.ndarray:
    """Solve M X = B for symmetric positive definite M via Cholesky."""
    M = np.asarray(M, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if M.shape[0] == 0:
        return np.zeros_like(B)
    try:
        c = linalg.cho_factor(M, lower=True, check_finite=False)
        return linalg.cho_solve(c, B, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def pd_inverse(M) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix, symmetric to
    machine precision."""
    M = np.asarray(M, dtype=np.float64)
    inv = pd_solve(M, np.eye(M.shape[0]))
    return (inv + inv.T) / 2.0


def gen_inverse(M, rel_tol: float = REL_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    Eigenvalues below ``rel_tol`` times the largest are treated as zero.
    Raises NegativeEigenvalue if the smallest eigenvalue is clearly
    negative on that scale.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] == 0:
        return M.copy()
    w, V = np.linalg.eigh(M)
    wmax = max(w[-1], 0.0)
    cutoff = rel_tol * wmax
    if w[0] < -max(cutoff, rel_tol):
        raise NegativeEigenvalue(
            f"matrix has eigenvalue {w[0]:g} (largest {wmax:g})")
    inv_w = np.zeros_like(w)
    pos = w > cutoff
    inv_w[pos] = 1.0 / w[pos]
    P = (V * inv_w) @ V.T
    return (P + P.T) / 2.0


def schur(M, keep) -> np.ndarray:
    """Schur complement M_kk - M_kc (M_cc)^{-1} M_ck onto ``keep``.

    c is the complement of ``keep``; with empty c this is just M_kk.
    """
    return _schur(M, keep, pd_inverse)


def schur_psd(M, keep) -> np.ndarray:
    """Schur complement using the pseudoinverse of the complement block."""
    return _schur(M, keep, gen_inverse)


def _schur(M, keep, inverter):
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[0]
    keep = as_index_set(keep, d)
    comp = complement(keep, d)
    Mkk = M[np.ix_(keep, keep)]
    if comp.size == 0:
        return Mkk.copy()
    Mkc = M[np.ix_(keep, comp)]
    Mcc = M[np.ix_(comp, comp)]
    S = Mkk - Mkc @ inverter(Mcc) @ Mkc.T
    return (S + S.T) / 2.0


def max_abs_dev(A) -> float:
    """Largest absolute entry."""
    A = np.asarray(A)
    return float(np.max(np.abs(A))) if A.size else 0.0


def max_colsum(A) -> float:
    """Maximum column sum norm: max over columns of the absolute column
    sums.  Upper-bounds the spectral radius."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(A), axis=0)))


def pattern_project(A, g) -> np.ndarray:
    """Zero the entries of A at non-edges of g, keeping the diagonal.

    Idempotent; preserves symmetry.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (g.d, g.d):
        raise ValueError(f"matrix order {A.shape} does not match d={g.d}")
    out = np.zeros_like(A)
    np.fill_diagonal(out, np.diagonal(A))
    if g.edges:
        eu, ev = np.array(g.edges, dtype=np.intp).T
        out[eu, ev] = A[eu, ev]
        out[ev, eu] = A[ev, eu]
    return out


def logdet_pd(M) -> float:
    """log det of a symmetric positive definite matrix, via Cholesky."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] == 0:
        return 0.0
    try:
        c, _ = linalg.cho_factor(M, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return 2.0 * float(np.sum(np.log(np.diagonal(c))))


def min_eig(M) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(M)[0])


def rank_tol(M, rel_tol: float = REL_TOL) -> int:
    """Numerical rank: eigenvalues above ``rel_tol`` times the largest
    absolute eigenvalue."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] == 0:
        return 0
    w = np.linalg.eigvalsh(M)
    scale = np.max(np.abs(w))
    if scale == 0.0:
        return 0
    return int(np.sum(w > rel_tol * scale))


# -- symmetric-matrix text format ------------------------------------------
#
#   d
#   M[0,0] ... M[0,d-1]
#   ...
#
# Symmetry is validated with absolute tolerance 1e-12, then the matrix is
# symmetrized exactly.


def read_sym_matrix(source) -> np.ndarray:
    if hasattr(source, "read"):
        return _parse_sym_matrix(source, getattr(source, "name", "<stream>"))
    with open(source, "r", encoding="utf-8") as fh:
        return _parse_sym_matrix(fh, source)


def _parse_sym_matrix(fh, path):
    lines = [(i, ln.split("#", 1)[0].strip()) for i, ln in enumerate(fh, 1)]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise GraphFormatError(path, 0, "empty matrix file")
    lineno, head = lines[0]
    try:
        d = int(head)
    except ValueError:
        raise GraphFormatError(path, lineno,
                               f"expected matrix order, got {head!r}") from None
    if len(lines) - 1 != d:
        raise GraphFormatError(path, lineno,
                               f"expected {d} matrix rows, got {len(lines) - 1}")
    M = np.empty((d, d))
    for r, (lineno, ln) in enumerate(lines[1:]):
        vals = ln.split()
        if len(vals) != d:
            raise GraphFormatError(path, lineno,
                                   f"expected {d} values, got {len(vals)}")
        try:
            M[r] = [float(v) for v in vals]
        except ValueError:
            raise GraphFormatError(path, lineno, "non-numeric entry") from None
    if not np.all(np.isfinite(M)):
        raise GraphFormatError(path, 0, "non-finite entries")
    try:
        return check_symmetric(M, tol=1e-12)
    except ValueError as exc:
        raise GraphFormatError(path, 0, str(exc)) from None


def write_sym_matrix(M, target) -> None:
    M = np.asarray(M)
    if hasattr(target, "write"):
        _emit_sym_matrix(M, target)
    else:
        with open(target, "w", encoding="utf-8") as fh:
            _emit_sym_matrix(M, fh)


def _emit_sym_matrix(M, fh):
    fh.write(f"{M.shape[0]}\n")
    for row in M:
        fh.write(" ".join(repr(float(v)) for v in row))
        fh.write("\n")
