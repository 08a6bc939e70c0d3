"""Numerical kernels: linear solves, matrix-exponential action, eigenvalues.

All routines act on plain numpy arrays or scipy sparse matrices. Matrices
with the sub-generator sign pattern (negative diagonal, nonnegative
off-diagonal, row sums <= 0) get special treatment: the exponential action
is evaluated by uniformization, which preserves nonnegativity exactly, and
the dominant eigenvalue is found through the Perron root of the nonnegative
matrix I + Q/Lambda.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lu_factor, lu_solve
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionTooLarge,
    NonConvergent,
    SingularMatrix,
    SlowConvergence,
)

DENSE_EIGEN_CAP = 2000

# Lambda is set to 1.05 * max(-Q_ii) so that I + Q/Lambda keeps a strictly
# positive diagonal even for rows with -Q_ii at the maximum.
_UNIFORMIZATION_SLACK = 1.05

_MIN_EXPM_TOL = 1e-15


def solve_linear(A, b):
    """Solve A x = b by LU factorization with partial pivoting.

    Raises SingularMatrix when a pivot falls below 1e-14 * ||A||_inf.
    One pass of iterative refinement keeps the residual within
    1e-10 * (1 + ||b||_inf).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    norm = np.max(np.abs(A).sum(axis=1)) if A.size else 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = lu_factor(A)
    pivots = np.abs(np.diag(lu))
    if norm == 0.0 or np.min(pivots) < 1e-14 * norm:
        raise SingularMatrix(
            f"pivot {np.min(pivots):.3e} below threshold {1e-14 * norm:.3e}"
        )
    x = lu_solve((lu, piv), b)
    tol = 1e-10 * (1.0 + np.max(np.abs(b)))
    for _ in range(2):
        r = b - A @ x
        if np.max(np.abs(r)) <= tol:
            break
        x = x + lu_solve((lu, piv), r)
    return x


def _neg_diagonal(Q):
    if sp.issparse(Q):
        d = -Q.diagonal()
    else:
        d = -np.diag(np.asarray(Q, dtype=float))
    return np.asarray(d, dtype=float)


def _poisson_log_weight(n, mu):
    return -mu + n * math.log(mu) - math.lgamma(n + 1)


def expm_action(Q, v, t, tol=1e-12):
    """Evaluate the row-vector action v * exp(Q t) by uniformization.

    With Lambda >= max(-Q_ii), exp(Qt) = sum_n Pois(n; Lambda t) (I + Q/Lambda)^n.
    Every term is nonnegative, so the result is nonnegative entrywise and the
    truncation error is bounded by the remaining Poisson tail mass times
    ||v||_1. Weights switch to log-space once Lambda*t exceeds 700 to dodge
    underflow of exp(-Lambda t).

    Raises NonConvergent if tol below 1e-15 is requested.
    """
    if tol < _MIN_EXPM_TOL:
        raise NonConvergent(f"tolerance {tol:.1e} below the {_MIN_EXPM_TOL:.0e} cap")
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = np.asarray(v, dtype=float)
    n_states = v.shape[0]
    if t == 0.0:
        return v.copy()

    diag = _neg_diagonal(Q)
    lam = _UNIFORMIZATION_SLACK * float(np.max(diag))
    if lam <= 0.0:
        # Zero generator: exp(Qt) = I.
        return v.copy()

    sparse = sp.issparse(Q)
    if sparse:
        B = sp.eye(n_states, format="csr") + Q.tocsr() * (1.0 / lam)
    else:
        B = np.eye(n_states) + np.asarray(Q, dtype=float) / lam

    mu = lam * t
    log_space = mu > 700.0
    # Keep the iterate sparse when the generator is large and v nearly empty;
    # the countdown chains touch only a thin band of states.
    use_sparse_vec = sparse and n_states > 2000 and np.count_nonzero(v) <= n_states // 8
    if use_sparse_vec:
        u = sp.csr_array(v.reshape(1, -1))
        acc = sp.csr_array((1, n_states))
    else:
        u = v.copy()
        acc = np.zeros(n_states)

    w = math.exp(-mu) if not log_space else 0.0
    cum = w
    if w > 0.0:
        acc = acc + w * u
    n = 0
    n_cap = int(mu + 60.0 * math.sqrt(mu + 1.0) + 1000.0)
    while cum < 1.0 - tol and n < n_cap:
        n += 1
        u = u @ B
        if use_sparse_vec and u.nnz > n_states // 4:
            u = np.asarray(u.todense()).ravel()
            acc = np.asarray(acc.todense()).ravel()
            use_sparse_vec = False
        if log_space:
            lw = _poisson_log_weight(n, mu)
            w = math.exp(lw) if lw > -745.0 else 0.0
        else:
            w = w * mu / n
        if w > 0.0:
            acc = acc + w * u
        cum += w
    if sp.issparse(acc):
        acc = np.asarray(acc.todense()).ravel()
    np.maximum(acc, 0.0, out=acc)
    return acc


@dataclass(frozen=True)
class EigenReport:
    """Eigenvalues with multiplicities after clustering.

    eigenvalues: list of (value, algebraic multiplicity), multiplicities sum
    to the matrix dimension. dominant_real is the real part of the eigenvalue
    with the greatest real part (imaginary parts below the clustering
    tolerance are dropped).
    """

    eigenvalues: tuple
    dominant_real: float
    tolerance: float


def eigen_spectrum(A, cluster_tol=None):
    """Full dense eigenvalue set with multiplicity clustering.

    Eigenvalues within cluster_tol (default 1e-7 * ||A||_inf) of each other
    are merged transitively and their multiplicities summed; each cluster is
    reported at its mean. Raises DimensionTooLarge beyond 2000 states
    (use dominant_eigen for the leading eigenvalue of big sparse matrices).
    """
    n = A.shape[0]
    if n > DENSE_EIGEN_CAP:
        raise DimensionTooLarge(
            f"dense eigensolve capped at {DENSE_EIGEN_CAP} states (got {n}); "
            "use dominant_eigen instead"
        )
    if sp.issparse(A):
        A = np.asarray(A.todense())
    A = np.asarray(A, dtype=float)
    norm = np.max(np.abs(A).sum(axis=1)) if n else 0.0
    if cluster_tol is None:
        cluster_tol = 1e-7 * max(norm, 1.0)
    vals = np.linalg.eigvals(A)
    order = np.lexsort((vals.imag, vals.real))
    vals = vals[order]

    # Transitive clustering by union-find over pairs within cluster_tol.
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(vals[i] - vals[j]) <= cluster_tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(vals[i])
    clustered = []
    for members in groups.values():
        mean = complex(np.mean(members))
        if abs(mean.imag) <= cluster_tol:
            mean = complex(mean.real, 0.0)
        clustered.append((mean, len(members)))
    clustered.sort(key=lambda p: (-p[0].real, p[0].imag))
    dominant = clustered[0][0].real if clustered else float("-inf")
    return EigenReport(eigenvalues=tuple(clustered), dominant_real=dominant, tolerance=cluster_tol)


def dominant_eigen(Q, tol=1e-10, max_iter=200000):
    """Eigenvalue of Q with the greatest real part, via the Perron root.

    Writes Q = Lambda (B - I) with B = I + Q/Lambda nonnegative; the greatest
    real part of the spectrum then equals Lambda (rho(B) - 1) with rho(B) the
    Perron root, which is real. rho(B) is the maximum over the strongly
    connected components of B's support graph: singleton components
    contribute their diagonal entry exactly, and each nontrivial component is
    irreducible with positive diagonal (hence primitive), so power iteration
    converges geometrically with the Collatz-Wielandt bracket certifying
    min/max ratios around the root.

    Raises SlowConvergence with the current estimate once max_iter is hit.
    """
    diag = _neg_diagonal(Q)
    n = diag.shape[0]
    lam = _UNIFORMIZATION_SLACK * float(np.max(diag))
    if lam <= 0.0:
        return 0.0
    if sp.issparse(Q):
        B = sp.csr_array(sp.eye(n, format="csr") + Q.tocsr() * (1.0 / lam))
    else:
        B = sp.csr_array(np.eye(n) + np.asarray(Q, dtype=float) / lam)
    B.eliminate_zeros()

    n_comp, labels = connected_components(B, directed=True, connection="strong")
    b_diag = B.diagonal()
    rho = 0.0
    for comp in range(n_comp):
        idx = np.flatnonzero(labels == comp)
        if idx.size == 1:
            rho = max(rho, float(b_diag[idx[0]]))
            continue
        sub = B[idx, :][:, idx]
        rho = max(rho, _perron_root(sub, tol, max_iter))
    return lam * (rho - 1.0)


def _perron_root(B, tol, max_iter):
    """Perron root of an irreducible nonnegative matrix with positive diagonal."""
    m = B.shape[0]
    w = np.full(m, 1.0 / m)
    est = 1.0
    spread = math.inf
    for _ in range(max_iter):
        wb = w @ B
        ratios = wb / w
        lo, hi = float(np.min(ratios)), float(np.max(ratios))
        est = 0.5 * (lo + hi)
        spread = hi - lo
        if spread <= tol * max(est, 1e-300):
            return est
        w = wb / np.max(wb)
    raise SlowConvergence(est, spread, max_iter)
