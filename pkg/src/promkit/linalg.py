"""Dense decomposition and least-squares kernels used by every other module.

Matrices are plain two-dimensional float64 numpy arrays. All functions are
pure and deterministic: identical input bits produce identical output bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, SingularSystemError

# Diagonal entries of the QR R-factor below this fraction of the largest one
# mark a rank-deficient column.
_QR_RANK_TOL = 1e-12


@dataclass(frozen=True)
class TruncatedSvdResult:
    """Rank-truncated singular value decomposition ``A ~ U @ diag(sigma) @ V.T``.

    ``u`` and ``v`` have orthonormal columns, ``sigma`` is nonincreasing and
    strictly positive. The sign of each column of ``u`` is fixed so that its
    largest-magnitude entry is positive (``v`` is flipped accordingly), which
    makes results reproducible across LAPACK builds.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def retained_rank(self) -> int:
        return int(self.sigma.size)

    def reconstruct(self) -> np.ndarray:
        return self.u @ (self.sigma[:, None] * self.v.T)


def truncated_svd(a: np.ndarray, eps: float) -> TruncatedSvdResult:
    """Compute the smallest-rank SVD with Frobenius error at most ``eps * ||a||_F``.

    Parameters
    ----------
    a : ndarray, shape (m, n)
        Matrix to decompose. Must be non-empty and finite.
    eps : float
        Relative truncation tolerance in [0, 1]. ``eps = 0`` keeps every
        singular value above the numerical-rank floor
        ``max(m, n) * machine_eps * sigma[0]``.

    Returns
    -------
    TruncatedSvdResult
        The retained rank is the smallest rank satisfying the bound. A zero
        matrix yields an empty basis (rank 0), not an error.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError("truncated_svd expects a non-empty 2-D matrix")
    if not np.isfinite(a).all():
        raise InvalidInputError("truncated_svd input contains non-finite entries")
    if not 0.0 <= eps <= 1.0:
        raise InvalidInputError(f"truncation tolerance must lie in [0, 1], got {eps}")

    u, sigma, vt = np.linalg.svd(a, full_matrices=False)

    if sigma.size == 0 or sigma[0] == 0.0:
        rank = 0
    elif eps == 0.0:
        floor = max(a.shape) * np.finfo(float).eps * sigma[0]
        rank = int(np.count_nonzero(sigma > floor))
    else:
        # tail2[r] = sum of squared singular values dropped when keeping r modes
        sq = sigma**2
        tail2 = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
        budget = (eps**2) * np.sum(sq)
        rank = int(np.argmax(tail2 <= budget))

    u = u[:, :rank].copy()
    v = vt[:rank].T.copy()
    sigma = sigma[:rank].copy()
    for j in range(rank):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0.0:
            u[:, j] = -u[:, j]
            v[:, j] = -v[:, j]
    return TruncatedSvdResult(u=u, sigma=sigma, v=v)


def qr_least_squares(w: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve ``min_x ||w @ x - r||_2`` for a tall full-column-rank ``w`` via QR.

    Raises
    ------
    SingularSystemError
        If any diagonal entry of the R factor falls below
        ``1e-12 * max |R_jj|``; the offending column index is attached.
    """
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    if w.ndim != 2 or w.shape[0] < w.shape[1]:
        raise InvalidInputError(f"expected a tall matrix, got shape {w.shape}")
    if r.shape != (w.shape[0],):
        raise InvalidInputError("right-hand side length must match the row count")

    q, rf = np.linalg.qr(w)
    diag = np.abs(np.diag(rf))
    cutoff = _QR_RANK_TOL * diag.max(initial=0.0)
    bad = np.flatnonzero(diag < cutoff)
    if diag.size and (bad.size or diag.max() == 0.0):
        col = int(bad[0]) if bad.size else 0
        raise SingularSystemError(
            f"rank-deficient least-squares matrix (column {col})", column=col
        )
    return scipy.linalg.solve_triangular(rf, q.T @ r)


def nonneg_least_squares(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimize ``||a @ x - b||_2`` subject to ``x >= 0`` (Lawson-Hanson).

    Active-set method: the dual vector ``w = a.T @ (b - a @ x)`` drives column
    activation; an inner loop keeps the passive-set solution feasible.
    Terminates when the largest dual component drops to ``1e-10 * ||a.T b||_inf``
    or after ``10 * n`` outer iterations. A zero right-hand side returns zeros.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise InvalidInputError("nonneg_least_squares expects a non-empty 2-D matrix")
    if b.shape != (a.shape[0],):
        raise InvalidInputError("right-hand side length must match the row count")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise InvalidInputError("nonneg_least_squares input contains non-finite entries")

    n = a.shape[1]
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = a.T @ b
    dual_scale = np.abs(w).max(initial=0.0)
    if dual_scale == 0.0:
        return x
    tol = 1e-10 * dual_scale

    for _ in range(10 * n):
        w = a.T @ (b - a @ x)
        candidates = np.flatnonzero(~passive)
        if candidates.size == 0 or w[candidates].max() <= tol:
            break
        passive[candidates[np.argmax(w[candidates])]] = True

        while True:
            idx = np.flatnonzero(passive)
            s_passive, *_ = np.linalg.lstsq(a[:, idx], b, rcond=None)
            s = np.zeros(n)
            s[idx] = s_passive
            if s_passive.size == 0 or s_passive.min() > 0.0:
                x = s
                break
            # Step toward s until the first passive component hits zero.
            blocking = idx[s_passive <= 0.0]
            ratios = x[blocking] / (x[blocking] - s[blocking])
            alpha = ratios.min()
            x = x + alpha * (s - x)
            x[x < 0.0] = 0.0
            passive[np.abs(x) <= 0.0] = False
            x[~passive] = 0.0
    return x
