"""Ground-truth CP models and synthetic data.

Random streams come from ``numpy.random.Generator`` over the Philox
counter-based bit generator; Gaussian variates use numpy's ziggurat sampler.
:func:`make_rng` derives independent sub-streams from a seed plus an index
path, e.g. ``make_rng(seed, grid_index, replicate)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor_core import khatri_rao

RNG_ALGORITHM = "numpy.Philox4x64 + ziggurat normal"


def make_rng(seed: int, *path: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class CPDecomposition:
    """Weights and unit-norm factor matrices of a CP model.

    With ``symmetric_pair`` set, ``factors`` holds the K distinct modes of an
    order-2K tensor whose mode ``K+k`` repeats mode ``k``.
    """

    weights: np.ndarray
    factors: list
    symmetric_pair: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        self.factors = [np.asarray(f, dtype=float) for f in self.factors]
        self.validate()

    def validate(self, tol: float = 1e-10):
        w = self.weights
        r = w.size
        if r == 0:
            raise ValueError("CP decomposition needs at least one component")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError(f"weights must be finite and positive, got {w}")
        if np.any(np.diff(w) > tol * max(1.0, w[0])):
            raise ValueError(f"weights must be sorted descending, got {w}")
        for k, f in enumerate(self.factors):
            if f.ndim != 2 or f.shape[1] != r:
                raise ValueError(
                    f"factor {k} has shape {f.shape}, expected (d, {r})")
            norms = np.linalg.norm(f, axis=0)
            if np.max(np.abs(norms - 1)) > tol:
                raise ValueError(f"factor {k} columns are not unit norm: {norms}")

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def dims(self) -> tuple:
        return tuple(f.shape[0] for f in self.factors)

    @property
    def order(self) -> int:
        return 2 * len(self.factors) if self.symmetric_pair else len(self.factors)

    def full_factors(self) -> list:
        if self.symmetric_pair:
            return list(self.factors) + list(self.factors)
        return list(self.factors)

    def permuted(self, perm: Sequence[int]) -> "CPDecomposition":
        perm = list(perm)
        return CPDecomposition(self.weights[perm], [f[:, perm] for f in self.factors],
                               self.symmetric_pair)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "shape": list(self.dims),
            "symmetric_pair": self.symmetric_pair,
            "order": self.order,
            # column-major: one list per column
            "factors": [f.T.tolist() for f in self.factors],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CPDecomposition":
        factors = [np.asarray(cols, dtype=float).T for cols in doc["factors"]]
        return cls(np.asarray(doc["weights"]), factors,
                   bool(doc.get("symmetric_pair", False)))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "CPDecomposition":
        return cls.from_dict(json.loads(text))


def sorted_cp(weights, factors, symmetric_pair=False) -> CPDecomposition:
    """Build a decomposition after sorting components by weight, descending."""
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(-weights, kind="stable")
    return CPDecomposition(weights[order], [np.asarray(f)[:, order] for f in factors],
                           symmetric_pair)


def gen_basis(d: int, r: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Random ``d x r`` matrix of unit columns with every pairwise cosine ``theta``.

    ``A = Q C^{1/2}`` where ``Q`` is a Haar-random orthonormal frame and ``C``
    has unit diagonal and ``theta`` off the diagonal.
    """
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    if r >= 2 and not (-1.0 / (r - 1) < theta < 1.0):
        raise ValueError(
            f"coherence {theta} infeasible for r={r}: need -1/(r-1) < theta < 1")
    g = rng.standard_normal((d, r))
    q, rr = np.linalg.qr(g)
    q = q * np.sign(np.diag(rr))
    c = np.full((r, r), float(theta))
    np.fill_diagonal(c, 1.0)
    w, v = np.linalg.eigh(c)
    root = (v * np.sqrt(w)) @ v.T
    a = q @ root
    return a / np.linalg.norm(a, axis=0)


def geometric_weights(w_max: float, ratio: float, r: int) -> np.ndarray:
    """``r`` values from ``w_max`` down to ``w_max / ratio``, geometrically spaced."""
    if r == 1:
        return np.array([float(w_max)])
    return float(w_max) * float(ratio) ** (-np.arange(r) / (r - 1))


def random_cp(dims: Sequence[int], weights, theta: float, rng,
              symmetric_pair: bool = False) -> CPDecomposition:
    r = len(weights)
    factors = [gen_basis(d, r, theta, rng) for d in dims]
    return sorted_cp(weights, factors, symmetric_pair)


@dataclass
class SampleBatch:
    """``n`` order-K observations stacked along the first axis."""

    samples: np.ndarray
    sigma: float
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dims(self) -> tuple:
        return self.samples.shape[1:]


def gen_spiked_samples(cp: CPDecomposition, n: int, sigma: float,
                       rng: np.random.Generator, *, scores=None,
                       seed: int | None = None) -> SampleBatch:
    """Draw ``X_i = sum_j sqrt(lambda_j) f_ij (o_k a_jk) + E_i``.

    ``scores`` overrides the ``(n, r)`` matrix of factor draws ``f_ij``.
    Draw order: scores first, then noise, both row-major over samples.
    """
    if not cp.symmetric_pair:
        raise ValueError("spiked samples need a symmetric-pair CP model")
    if n < 1:
        raise ValueError("need at least one sample")
    dims = cp.dims
    d = int(np.prod(dims))
    w = np.sqrt(cp.weights)
    f = rng.standard_normal((n, cp.rank)) if scores is None else np.asarray(scores, float)
    if f.shape != (n, cp.rank):
        raise ValueError(f"scores must have shape {(n, cp.rank)}")
    basis = khatri_rao(cp.factors)  # d x r, column j = vec(o_k a_jk)
    noise = rng.standard_normal((n, d)) if sigma > 0 else np.zeros((n, d))
    flat = (f * w) @ basis.T + sigma * noise
    samples = np.moveaxis(flat.T.reshape(tuple(dims) + (n,), order="F"), -1, 0)
    return SampleBatch(samples, float(sigma), seed)


def data_matrix(batch: SampleBatch) -> np.ndarray:
    """``(vec(X_1), ..., vec(X_n)) / sqrt(n)`` as a ``d x n`` matrix."""
    n = batch.n
    return np.moveaxis(batch.samples, 0, -1).reshape(-1, n, order="F") / np.sqrt(n)


def covariance_tensor(batch: SampleBatch) -> np.ndarray:
    """``T = n^{-1} sum_i X_i o X_i`` of order 2K."""
    dm = data_matrix(batch)
    dims = tuple(batch.dims)
    return (dm @ dm.T).reshape(dims + dims, order="F")


def compose(cp: CPDecomposition) -> np.ndarray:
    """Dense tensor ``sum_j lambda_j o_k a_jk`` (all 2K modes when paired)."""
    factors = cp.full_factors()
    kr = khatri_rao(factors) @ cp.weights
    return kr.reshape([f.shape[0] for f in factors], order="F")


def gen_noisy_cp(cp: CPDecomposition, sigma: float,
                 rng: np.random.Generator) -> np.ndarray:
    t = compose(cp)
    if sigma > 0:
        t = t + sigma * rng.standard_normal(t.shape)
    return t
