"""Eigen/SVD kernels with a deterministic sign convention.

Dense LAPACK routines are used when the smaller matrix dimension is at most
``DENSE_LIMIT``; above that ARPACK (``scipy.sparse.linalg``) computes the
truncated decomposition.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

DENSE_LIMIT = 512
GRAM_COND_LIMIT = 1e12


class SpectralError(ArithmeticError):
    """An eigen/SVD solver failed to reach its residual tolerance."""


class IllConditionedError(ArithmeticError):
    """A Gram matrix is too ill-conditioned to invert without a ridge."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


@dataclass(frozen=True)
class SpectralResult:
    values: np.ndarray
    vectors: np.ndarray


def sign_normalize(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flip columns so each one's largest-magnitude entry is positive.

    Returns the flipped matrix and the +/-1 sign applied to each column.
    Ties go to the lowest index.
    """
    v = np.array(vectors, dtype=float, copy=True)
    if v.ndim == 1:
        out, s = sign_normalize(v[:, None])
        return out[:, 0], s
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs, signs


def _check_rank(r: int, limit: int):
    if not 1 <= r <= limit:
        raise ValueError(f"requested rank {r} outside [1, {limit}]")


def top_eigs_sym(m: np.ndarray, r: int, tol: float = 1e-10) -> SpectralResult:
    """Top ``r`` eigenpairs (by algebraic value) of ``(m + m.T) / 2``."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    n = m.shape[0]
    _check_rank(r, n)
    sym = (m + m.T) / 2
    if n <= DENSE_LIMIT or r >= n - 1:
        w, v = scipy.linalg.eigh(sym, subset_by_index=[n - r, n - 1])
    else:
        w, v = scipy.sparse.linalg.eigsh(sym, k=r, which="LA", tol=tol * 1e-2)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    v, _ = sign_normalize(v)
    scale = max(float(np.linalg.norm(sym)), np.finfo(float).tiny)
    resid = np.linalg.norm(sym @ v - v * w, axis=0).max()
    if resid > max(tol, 1e3 * np.finfo(float).eps) * scale * np.sqrt(n):
        raise SpectralError(
            f"eigensolver residual {resid:.3e} exceeds tolerance "
            f"{tol:.1e} * {scale:.3e}")
    return SpectralResult(w, v)


def top_svd(m: np.ndarray, r: int, tol: float = 1e-10):
    """Truncated SVD ``(U, s, V)`` with ``m ~= U diag(s) V.T``.

    The sign of each left singular vector follows :func:`sign_normalize`;
    the matching right singular vector is flipped with it.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {m.shape}")
    k = min(m.shape)
    _check_rank(r, k)
    if k <= DENSE_LIMIT or r >= k - 1:
        u, s, vt = scipy.linalg.svd(m, full_matrices=False,
                                    lapack_driver="gesdd")
        u, s, vt = u[:, :r], s[:r], vt[:r]
    else:
        u, s, vt = scipy.sparse.linalg.svds(m, k=r, tol=tol * 1e-2)
        order = np.argsort(-s, kind="stable")
        u, s, vt = u[:, order], s[order], vt[order]
    u, signs = sign_normalize(u)
    v = vt.T * signs
    resid = np.linalg.norm(m @ v - u * s, axis=0).max() if r else 0.0
    scale = max(float(s[0]), np.finfo(float).tiny)
    if resid > max(tol, 1e3 * np.finfo(float).eps) * scale * np.sqrt(k):
        raise SpectralError(
            f"SVD residual {resid:.3e} exceeds tolerance {tol:.1e} * {scale:.3e}")
    return u, s, v


def top_left_singular(m: np.ndarray) -> np.ndarray:
    """Top left singular vector, sign-normalized."""
    m = np.asarray(m, dtype=float)
    if m.shape[0] == 1:
        return np.ones(1)
    if m.shape[1] == 1:
        n = np.linalg.norm(m)
        if n == 0:
            raise SpectralError("top singular vector of a zero matrix")
        return sign_normalize(m[:, 0] / n)[0]
    u, _, _ = top_svd(m, 1)
    return u[:, 0]


def right_inverse(a: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """``B = A (A^T A + ridge I)^{-1}`` so that ``A^T B = I`` when ridge is 0."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise ValueError(f"right_inverse needs rows >= cols, got {a.shape}")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    gram = a.T @ a
    r = gram.shape[0]
    if ridge == 0:
        ev = np.linalg.eigvalsh(gram)
        lo, hi = ev[0], ev[-1]
        if lo <= 0 or hi / lo > GRAM_COND_LIMIT:
            raise IllConditionedError(
                f"Gram matrix is ill-conditioned: smallest eigenvalue "
                f"{lo:.3e}, largest {hi:.3e}", min_eigenvalue=float(lo))
    g = gram + ridge * np.eye(r)
    return scipy.linalg.solve(g, a.T, assume_a="pos").T


def spectral_norm(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def gram_delta(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    return spectral_norm(a.T @ a - np.eye(a.shape[1]))
