"""Comparison estimators: HOSVD-style initialisation and randomized-start ALS.

The ALS here starts from clustered rank-one power-iteration candidates
(with deflation between rounds) and then runs plain alternating least squares. It is this package's own
construction and benchmark output labels it "ALS (this implementation)".
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cp_model import CPDecomposition, sorted_cp
from .cpca import RankError, carry_sign_last
from .ico import FitTrace
from .spectral import sign_normalize, top_left_singular, top_svd
from .tensor_core import contract_modes, khatri_rao, unfold

ALS_LABEL = "ALS (this implementation)"


def _contract_all_but(t, vectors, skip):
    return contract_modes(t, [(l, v) for l, v in enumerate(vectors) if l != skip])


def _fit_weights(t, factors):
    design = khatri_rao(factors)
    w, *_ = scipy.linalg.lstsq(design, t.reshape(-1, order="F"))
    return w


def hosvd_init(t: np.ndarray, rank: int, symmetric: bool = False) -> CPDecomposition:
    """Leading left singular vectors of every unfolding, with least-squares weights.

    With ``symmetric`` the input is a pairwise-symmetric order-2K tensor and
    the result keeps the first K modes.
    """
    t = np.asarray(t, dtype=float)
    if rank < 1 or rank > min(t.shape):
        raise RankError(f"rank {rank} exceeds the smallest dimension {min(t.shape)}")
    factors = [top_svd(unfold(t, k), rank)[0] for k in range(t.ndim)]
    w = _fit_weights(t, factors)
    if symmetric:
        K = t.ndim // 2
        w = np.abs(w)
        return _positive_cp(w, factors[:K], symmetric_pair=True)
    # flip last-mode columns so each component fits t with a positive weight
    factors = carry_sign_last(t, np.abs(w), factors)
    return _positive_cp(np.abs(w), factors)


def _positive_cp(w, factors, symmetric_pair=False):
    w = np.maximum(w, np.finfo(float).tiny)
    return sorted_cp(w, factors, symmetric_pair)


@dataclass(frozen=True)
class ALSConfig:
    restarts: int = 30
    power_iters: int = 20
    tau: float = 0.9
    max_sweeps: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.restarts < 1 or self.power_iters < 1 or self.max_sweeps < 1:
            raise ValueError("restarts, power_iters and max_sweeps must be positive")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")


def rank_one_power(t: np.ndarray, rng: np.random.Generator, iters: int) -> list:
    """Alternating rank-one power iteration from a random Gaussian start."""
    vecs = []
    for d in t.shape:
        g = rng.standard_normal(d)
        vecs.append(g / np.linalg.norm(g))
    for _ in range(iters):
        for k in range(t.ndim):
            v = _contract_all_but(t, vecs, k)
            n = np.linalg.norm(v)
            if n == 0:
                break
            vecs[k] = v / n
    return vecs


def _mean_cos(a, b):
    return float(np.mean([abs(x @ y) for x, y in zip(a, b)]))


def cluster_candidates(candidates: list, tau: float) -> list:
    """Greedy clustering by mean-mode |cosine| against each cluster's first member.

    Returns clusters as lists of candidate indices, largest first (ties keep
    order of first appearance).
    """
    clusters = []
    for i, c in enumerate(candidates):
        for cl in clusters:
            if _mean_cos(candidates[cl[0]], c) >= tau:
                cl.append(i)
                break
        else:
            clusters.append([i])
    return sorted(clusters, key=len, reverse=True)


def _centroid(members: list) -> list:
    lead = members[0]
    out = []
    for k in range(len(lead)):
        stack = np.column_stack([m[k] * (1.0 if m[k] @ lead[k] >= 0 else -1.0)
                                 for m in members])
        out.append(top_left_singular(stack))
    return out


def _residual(t, weights, factors):
    fit = (khatri_rao(factors) @ weights).reshape(t.shape, order="F")
    return float(np.linalg.norm(t - fit))


def als_refine(t: np.ndarray, factors: list, cfg: ALSConfig | None = None):
    """Alternating least squares sweeps from the given unit-column factors.

    Returns ``(weights, factors, FitTrace)``; weights are the column norms
    of the last solved mode and may still need a sign fix.
    """
    cfg = cfg or ALSConfig()
    t = np.asarray(t, dtype=float)
    N = t.ndim
    factors = [np.array(f, dtype=float, copy=True) for f in factors]
    r = factors[0].shape[1]
    weights = np.ones(r)
    trace = FitTrace()
    reason = "max-iter"
    for m in range(1, cfg.max_sweeps + 1):
        max_update = 0.0
        for k in range(N):
            others = [factors[(k + i) % N] for i in range(1, N)]
            mttkrp = unfold(t, k) @ khatri_rao(others)
            gram = np.ones((r, r))
            for f in others:
                gram *= f.T @ f
            new = scipy.linalg.lstsq(gram, mttkrp.T)[0].T
            norms = np.linalg.norm(new, axis=0)
            if np.any(norms == 0):
                raise ArithmeticError(f"ALS produced a zero column at sweep {m}, mode {k}")
            new = new / norms
            weights = norms
            upd = np.sqrt(np.maximum(0.0, 1 - np.sum(new * factors[k], axis=0) ** 2))
            max_update = max(max_update, float(upd.max()))
            factors[k] = new
            trace.add(m, k, float(upd.max()), residual=_residual(t, weights, factors))
        trace.weights.append(weights.tolist())
        if max_update <= cfg.tol:
            reason = "tolerance"
            break
    trace.iterations = m
    trace.stop_reason = reason
    return weights, factors, trace


def _deflate(t, weight, vecs):
    rank1 = vecs[0]
    for v in vecs[1:]:
        rank1 = np.multiply.outer(rank1, v)
    return t - weight * rank1


def als_randomized(t: np.ndarray, rank: int, cfg: ALSConfig | None = None,
                   rng: np.random.Generator | None = None, symmetric: bool = False):
    """Randomized-start ALS with deflated candidate rounds.

    The ``cfg.restarts`` rank-one power runs are split over ``rank`` rounds,
    each on a spawned sub-stream of ``rng``. Round ``i`` works on the tensor
    with the ``i`` components found so far subtracted; its candidates are
    clustered and the centroid of the largest cluster not already chosen
    becomes the next starting component. ALS sweeps then refine all of them.
    Returns ``(CPDecomposition, FitTrace)``.
    """
    cfg = cfg or ALSConfig()
    if cfg.restarts < rank:
        raise ValueError(f"restarts ({cfg.restarts}) must be at least the rank ({rank})")
    t = np.asarray(t, dtype=float)
    rng = rng if rng is not None else np.random.default_rng(0)
    subs = rng.spawn(cfg.restarts)
    per_round = np.array_split(np.arange(cfg.restarts), rank)
    residual = t
    chosen = []
    for i, idx in enumerate(per_round):
        cands = [rank_one_power(residual, subs[s], cfg.power_iters) for s in idx]
        fresh = [cl for cl in cluster_candidates(cands, cfg.tau)
                 if all(_mean_cos(cands[cl[0]], c) < cfg.tau for c in chosen)]
        if not fresh:
            raise ArithmeticError(
                f"no new candidate cluster for component {i + 1} of {rank}; "
                "increase the number of restarts")
        cent = _centroid([cands[j] for j in fresh[0]])
        chosen.append(cent)
        weight = float(_contract_all_but(residual, cent, t.ndim - 1) @ cent[-1])
        residual = _deflate(residual, weight, cent)
    init = [np.column_stack([c[k] for c in chosen]) for k in range(t.ndim)]
    return als_fit(t, init, cfg, symmetric)


def als_fit(t: np.ndarray, init, cfg: ALSConfig | None = None, symmetric: bool = False):
    """ALS sweeps from explicit starting factors, returned as a sorted decomposition.

    ``init`` holds one factor per mode of ``t`` or a decomposition; a paired
    decomposition is expanded to all 2K modes. With ``symmetric`` the result
    keeps the first K modes of the pairwise-symmetric input.
    """
    t = np.asarray(t, dtype=float)
    if isinstance(init, CPDecomposition):
        init = init.full_factors()
    weights, factors, trace = als_refine(t, init, cfg)
    if symmetric:
        K = t.ndim // 2
        factors = [sign_normalize(f)[0] for f in factors[:K]]
        return sorted_cp(weights, factors, symmetric_pair=True), trace
    factors = carry_sign_last(t, weights, factors)
    return sorted_cp(weights, factors), trace
