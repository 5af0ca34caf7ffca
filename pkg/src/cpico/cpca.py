"""Composite PCA: spectral initialisation for CP decompositions."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cp_model import CPDecomposition, sorted_cp
from .spectral import sign_normalize, top_eigs_sym, top_left_singular, top_svd
from .tensor_core import unfold, unfold_group

RANK_RTOL = 1e-12


class RankError(ValueError):
    """The requested rank exceeds what the unfolded matrix supports."""


@dataclass
class CPCAOutput:
    cp: CPDecomposition
    u: np.ndarray               # columns are the leading left vectors
    v: np.ndarray | None        # right vectors (general tensors only)
    subset: tuple               # row modes of the unfolding


def _refold_factor(vector: np.ndarray, dims: Sequence[int], pos: int) -> np.ndarray:
    sub = vector.reshape(tuple(dims), order="F")
    return top_left_singular(unfold(sub, pos))


def _check_spectrum(values: np.ndarray, r: int, what: str):
    if values[r - 1] <= RANK_RTOL * max(abs(values[0]), np.finfo(float).tiny):
        raise RankError(
            f"rank {r} exceeds the numerical rank of the {what} "
            f"(value {r} is {values[r - 1]:.3e}, leading {values[0]:.3e})")


def _paired_dims(shape: Sequence[int]) -> tuple:
    if len(shape) % 2 or len(shape) == 0:
        raise ValueError(f"pairwise-symmetric tensor needs even order, got {len(shape)}")
    K = len(shape) // 2
    if tuple(shape[:K]) != tuple(shape[K:]):
        raise ValueError(f"modes do not pair up: {tuple(shape)}")
    return tuple(shape[:K])


def _symmetric_from_eigs(values, vectors, dims) -> CPCAOutput:
    r = values.size
    factors = [np.column_stack([_refold_factor(vectors[:, j], dims, k) for j in range(r)])
               for k in range(len(dims))]
    cp = CPDecomposition(values, factors, symmetric_pair=True)
    return CPCAOutput(cp, vectors, None, tuple(range(len(dims))))


def cpca_symmetric(t: np.ndarray, rank: int) -> CPCAOutput:
    """CPCA of a pairwise-symmetric order-2K tensor (e.g. a covariance tensor).

    The weights are the leading eigenvalues of ``mat_[K](t)`` and the mode-k
    factor of component j is the top left singular vector of the mode-k
    unfolding of the j-th eigenvector folded back to ``d_1 x ... x d_K``.
    """
    t = np.asarray(t, dtype=float)
    dims = _paired_dims(t.shape)
    K = len(dims)
    mat = unfold_group(t, range(K))
    if not 1 <= rank <= mat.shape[0]:
        raise RankError(f"rank {rank} outside [1, {mat.shape[0]}]")
    res = top_eigs_sym(mat, rank)
    _check_spectrum(res.values, rank, "unfolded tensor")
    return _symmetric_from_eigs(res.values, res.vectors, dims)


def cpca_symmetric_from_data(data: np.ndarray, dims: Sequence[int],
                             rank: int) -> CPCAOutput:
    """Same estimator computed from the ``d x n`` data matrix.

    ``data`` holds ``vec(X_i) / sqrt(n)`` in its columns so that
    ``data @ data.T`` is the unfolded covariance tensor.
    """
    data = np.asarray(data, dtype=float)
    dims = tuple(int(x) for x in dims)
    if data.shape[0] != int(np.prod(dims)):
        raise ValueError(f"data has {data.shape[0]} rows, dims {dims} need {int(np.prod(dims))}")
    if not 1 <= rank <= min(data.shape):
        raise RankError(f"rank {rank} outside [1, {min(data.shape)}]")
    u, s, _ = top_svd(data, rank)
    values = s ** 2
    _check_spectrum(values, rank, "data matrix")
    return _symmetric_from_eigs(values, u, dims)


def choose_subset(dims: Sequence[int]) -> tuple:
    """Row modes making ``mat_S`` as square as possible.

    Maximises ``min(d_S, d / d_S)``; ties go to the smallest subset, then to
    the lexicographically first one.
    """
    n = len(dims)
    total = int(np.prod(dims))
    best, best_key = None, None
    for size in range(1, n):
        for s in itertools.combinations(range(n), size):
            d_s = int(np.prod([dims[k] for k in s]))
            key = min(d_s, total // d_s)
            if best_key is None or key > best_key:
                best, best_key = s, key
    return best


def cpca_general(t: np.ndarray, rank: int, subset: Sequence[int] | None = None) -> CPCAOutput:
    """CPCA of a general order-N tensor via the SVD of ``mat_S(t)``.

    The overall sign of each component is carried by its last-mode factor so
    that ``compose`` of the result approximates ``t`` with positive weights.
    """
    t = np.asarray(t, dtype=float)
    n_modes = t.ndim
    if n_modes < 3:
        raise ValueError("general CPCA needs a tensor of order >= 3")
    s = choose_subset(t.shape) if subset is None else tuple(sorted(set(int(k) for k in subset)))
    rest = tuple(k for k in range(n_modes) if k not in s)
    mat = unfold_group(t, s)
    limit = min(mat.shape)
    if not 1 <= rank <= limit:
        raise RankError(f"rank {rank} too large for subset {s}: at most {limit}")
    u, sv, v = top_svd(mat, rank)
    _check_spectrum(sv, rank, f"mode-{s} unfolding")
    dims_s = [t.shape[k] for k in s]
    dims_c = [t.shape[k] for k in rest]
    factors = [None] * n_modes
    for pos, k in enumerate(s):
        factors[k] = np.column_stack([_refold_factor(u[:, j], dims_s, pos) for j in range(rank)])
    for pos, k in enumerate(rest):
        factors[k] = np.column_stack([_refold_factor(v[:, j], dims_c, pos) for j in range(rank)])
    factors = carry_sign_last(t, sv, factors)
    return CPCAOutput(sorted_cp(sv, factors), u, v, s)


def carry_sign_last(t: np.ndarray, weights, factors: list) -> list:
    """Flip last-mode columns where ``t x_k a_jk`` disagrees in sign with the weight."""
    factors = [np.array(f, copy=True) for f in factors]
    for k in range(len(factors) - 1):
        factors[k], _ = sign_normalize(factors[k])
    last = len(factors) - 1
    for j in range(factors[0].shape[1]):
        val = t
        for k in range(last - 1, -1, -1):
            val = np.tensordot(val, factors[k][:, j], axes=([k], [0]))
        fit = float(val @ factors[last][:, j])
        if np.sign(fit) != np.sign(weights[j]) and fit != 0:
            factors[last][:, j] *= -1
    return factors
