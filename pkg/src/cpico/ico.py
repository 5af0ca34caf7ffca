"""Iterative concurrent orthogonalization (ICO) refinement.

Each sweep visits the modes in order. For mode ``k`` every component ``j``
contracts the data tensor against the ``j``-th right-inverse direction of all
other modes, then takes the top eigenvector (pairwise-symmetric tensors) or
the normalized contraction (general tensors). The mode's right inverse is
refreshed only after all of its components are updated, and later modes in
the same sweep use the refreshed value.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .coherence import match_components, projector_distance
from .cp_model import CPDecomposition, sorted_cp
from .cpca import carry_sign_last
from .spectral import IllConditionedError, right_inverse, sign_normalize, top_eigs_sym

DEGENERATE_NORM = 1e-300


class DegenerateContractionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ICOConfig:
    tol: float = 1e-6
    max_iter: int = 50
    ridge: float = 0.0
    trace: bool = False

    def __post_init__(self):
        if not self.tol >= 0:
            raise ValueError("tol must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass
class FitTrace:
    """Per-(sweep, mode) update sizes, optional true errors, and stop info."""

    rows: list = field(default_factory=list)
    iterations: int = 0
    stop_reason: str = ""
    weights: list = field(default_factory=list)     # per-sweep weight estimates
    snapshots: list = field(default_factory=list)   # per-sweep factor lists (trace=True)
    errors: list = field(default_factory=list)      # per-sweep r x K true errors

    def add(self, sweep, mode, max_update, max_true_error=None, **extra):
        row = {"sweep": sweep, "mode": mode, "max_update": float(max_update)}
        if max_true_error is not None:
            row["max_true_error"] = float(max_true_error)
        row.update(extra)
        self.rows.append(row)

    def sweep_updates(self) -> np.ndarray:
        """Largest update per sweep."""
        if not self.rows:
            return np.zeros(0)
        n = max(r["sweep"] for r in self.rows)
        out = np.zeros(n)
        for r in self.rows:
            out[r["sweep"] - 1] = max(out[r["sweep"] - 1], r["max_update"])
        return out

    def to_csv(self) -> str:
        cols = ["sweep", "mode", "max_update"]
        extra = sorted({k for r in self.rows for k in r} - set(cols))
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols + extra, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow({k: (f"{v:.10e}" if isinstance(v, float) else v)
                             for k, v in r.items()})
        return buf.getvalue()


def _init_factors(init, dims, rank):
    factors = init.factors if isinstance(init, CPDecomposition) else list(init)
    if len(factors) != len(dims):
        raise ValueError(f"init has {len(factors)} modes, expected {len(dims)}")
    out = []
    for k, (f, d) in enumerate(zip(factors, dims)):
        f = np.array(f, dtype=float, copy=True)
        if f.shape != (d, rank):
            raise ValueError(f"init factor {k} has shape {f.shape}, expected {(d, rank)}")
        norms = np.linalg.norm(f, axis=0)
        if np.max(np.abs(norms - 1)) > 1e-8:
            raise ValueError(f"init factor {k} columns are not unit norm: {norms}")
        out.append(f)
    return out


def _right_inverse(a, ridge, sweep, mode):
    try:
        return right_inverse(a, ridge)
    except IllConditionedError as exc:
        raise IllConditionedError(f"sweep {sweep}, mode {mode}: {exc}",
                                  exc.min_eigenvalue) from exc


class _Tracker:
    """Collects trace rows and true errors for one run."""

    def __init__(self, truth, factors, cfg):
        self.trace = FitTrace()
        self.cfg = cfg
        self.truth = truth
        self.perm = None
        if truth is not None:
            est = CPDecomposition(np.ones(factors[0].shape[1]), factors)
            tr = CPDecomposition(np.ones(truth.rank), truth.factors[:len(factors)])
            self.perm = match_components(est, tr).permutation

    def true_errors(self, factors, k):
        if self.truth is None:
            return None
        # perm[j] is the estimate index matched to truth component j
        return projector_distance(self.truth.factors[k], factors[k][:, self.perm])

    def record(self, sweep, k, updates, factors):
        errs = self.true_errors(factors, k)
        self.trace.add(sweep, k, float(np.max(updates)),
                       None if errs is None else float(np.max(errs)))

    def end_sweep(self, factors, weights):
        self.trace.weights.append(np.asarray(weights, float).tolist())
        if self.cfg.trace:
            self.trace.snapshots.append([f.copy() for f in factors])
        if self.truth is not None:
            self.trace.errors.append(np.column_stack(
                [self.true_errors(factors, k) for k in range(len(factors))]))


def _run(n_modes, rank, factors, cfg, update_mode, weights_fn, tracker):
    bs = [_right_inverse(f, cfg.ridge, 0, k) for k, f in enumerate(factors)]
    m = 0
    while True:
        m += 1
        max_update = 0.0
        for k in range(n_modes):
            new = np.empty_like(factors[k])
            for j in range(rank):
                a = update_mode(j, k, bs, m)
                if a @ factors[k][:, j] < 0:
                    a = -a
                new[:, j] = a
            updates = projector_distance(new, factors[k])
            max_update = max(max_update, float(updates.max()))
            factors[k] = new
            bs[k] = _right_inverse(new, cfg.ridge, m, k)
            tracker.record(m, k, updates, factors)
        weights = weights_fn(bs)
        tracker.end_sweep(factors, weights)
        if max_update <= cfg.tol:
            reason = "tolerance"
            break
        if m >= cfg.max_iter:
            reason = "max-iter"
            break
    tracker.trace.iterations = m
    tracker.trace.stop_reason = reason
    return factors, bs, weights, tracker.trace


# -- pairwise-symmetric tensors ----------------------------------------------

def _dense_symmetric_ops(t, K):
    def project(j, k, bs, m):
        mat = t
        # contract the paired modes l and K+l for all l != k, highest axis first
        axes = sorted([l for l in range(K) if l != k] + [K + l for l in range(K) if l != k],
                      reverse=True)
        for ax in axes:
            mat = np.tensordot(mat, bs[ax % K][:, j], axes=([ax], [0]))
        return mat

    def full(bs):
        out = []
        for j in range(bs[0].shape[1]):
            val = t
            for ax in range(2 * K - 1, -1, -1):
                val = np.tensordot(val, bs[ax % K][:, j], axes=([ax], [0]))
            out.append(float(val))
        return np.array(out)

    return project, full


def _sample_symmetric_ops(samples, K):
    # samples: (n, d_1, ..., d_K), already scaled by 1/sqrt(n)
    def project(j, k, bs, m):
        y = samples
        for l in range(K - 1, -1, -1):
            if l != k:
                y = np.tensordot(y, bs[l][:, j], axes=([l + 1], [0]))
        return y.T @ y

    def full(bs):
        out = []
        for j in range(bs[0].shape[1]):
            y = samples
            for l in range(K - 1, -1, -1):
                y = np.tensordot(y, bs[l][:, j], axes=([l + 1], [0]))
            out.append(float(y @ y))
        return np.array(out)

    return project, full


def _ico_symmetric(project, full, dims, rank, init, cfg, truth):
    K = len(dims)
    factors = _init_factors(init, dims, rank)
    tracker = _Tracker(truth, factors, cfg)

    def update_mode(j, k, bs, m):
        return top_eigs_sym(project(j, k, bs, m), 1).vectors[:, 0]

    factors, bs, _, trace = _run(K, rank, factors, cfg, update_mode, full, tracker)
    weights = full(bs)
    factors = [sign_normalize(f)[0] for f in factors]
    if np.any(weights <= 0):
        raise ArithmeticError(f"nonpositive weight estimate {weights}; the "
                              "input is not a nonnegative-definite covariance tensor")
    return sorted_cp(weights, factors, symmetric_pair=True), trace


def ico_symmetric(t, rank, init, cfg: ICOConfig | None = None, truth=None):
    """Refine a CP estimate of a pairwise-symmetric order-2K tensor.

    Returns ``(CPDecomposition, FitTrace)``. ``init`` is a list of K factor
    matrices (or a decomposition); ``truth`` enables per-sweep true errors.
    """
    cfg = cfg or ICOConfig()
    t = np.asarray(t, dtype=float)
    if t.ndim % 2:
        raise ValueError("pairwise-symmetric tensor needs even order")
    K = t.ndim // 2
    dims = t.shape[:K]
    if t.shape[K:] != dims:
        raise ValueError(f"modes do not pair up: {t.shape}")
    project, full = _dense_symmetric_ops(t, K)
    return _ico_symmetric(project, full, dims, rank, init, cfg, truth)


def ico_symmetric_from_data(data, dims, rank, init, cfg: ICOConfig | None = None,
                            truth=None):
    """Same iteration driven by the ``d x n`` data matrix instead of the covariance tensor."""
    cfg = cfg or ICOConfig()
    dims = tuple(int(x) for x in dims)
    data = np.asarray(data, dtype=float)
    n = data.shape[1]
    samples = np.moveaxis(data.reshape(dims + (n,), order="F"), -1, 0)
    project, full = _sample_symmetric_ops(samples, len(dims))
    return _ico_symmetric(project, full, dims, rank, init, cfg, truth)


# -- general tensors ---------------------------------------------------------

def ico_general(t, rank, init, cfg: ICOConfig | None = None, truth=None):
    """Refine a CP estimate of a general order-N tensor.

    Weights are ``|t x_1 b_j1 ... x_N b_jN|``; the component sign is carried
    by the last-mode factor.
    """
    cfg = cfg or ICOConfig()
    t = np.asarray(t, dtype=float)
    N = t.ndim
    dims = t.shape
    factors = _init_factors(init, dims, rank)
    tracker = _Tracker(truth, factors, cfg)

    def update_mode(j, k, bs, m):
        v = t
        for l in range(N - 1, -1, -1):
            if l != k:
                v = np.tensordot(v, bs[l][:, j], axes=([l], [0]))
        norm = np.linalg.norm(v)
        if not norm > DEGENERATE_NORM:
            raise DegenerateContractionError(
                f"contraction vanished at sweep {m}, component {j}, mode {k}")
        return v / norm

    def weights_fn(bs):
        out = []
        for j in range(rank):
            v = t
            for l in range(N - 1, -1, -1):
                v = np.tensordot(v, bs[l][:, j], axes=([l], [0]))
            out.append(abs(float(v)))
        return np.array(out)

    factors, bs, _, trace = _run(N, rank, factors, cfg, update_mode, weights_fn, tracker)
    weights = weights_fn(bs)
    if np.any(weights <= 0):
        raise DegenerateContractionError(f"zero weight estimate {weights}")
    factors = carry_sign_last(t, weights, factors)
    return sorted_cp(weights, factors), trace


def one_step_update(t, rank, init, cfg: ICOConfig | None = None, *, symmetric=None,
                    dims=None):
    """Exactly one ICO sweep.

    ``symmetric`` selects the pairwise-symmetric iteration; by default it is
    inferred from ``init`` being a paired decomposition. Passing ``dims``
    treats ``t`` as the ``d x n`` data matrix of the symmetric model.
    """
    cfg = replace(cfg or ICOConfig(), max_iter=1)
    if symmetric is None:
        symmetric = isinstance(init, CPDecomposition) and init.symmetric_pair
    if dims is not None:
        return ico_symmetric_from_data(t, dims, rank, init, cfg)[0]
    if symmetric:
        return ico_symmetric(t, rank, init, cfg)[0]
    return ico_general(t, rank, init, cfg)[0]
