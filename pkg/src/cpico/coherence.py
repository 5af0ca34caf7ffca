"""Coherence diagnostics, error metrics, rate formulas and iteration counts."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .spectral import spectral_norm
from .tensor_core import khatri_rao

UNIT_TOL = 1e-8


def sin_theta(u: np.ndarray, v: np.ndarray) -> float:
    """Sine of the angle between the lines spanned by unit vectors ``u``, ``v``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    for name, x in (("u", u), ("v", v)):
        if abs(np.linalg.norm(x) - 1) > UNIT_TOL:
            raise ValueError(f"{name} is not a unit vector (norm {np.linalg.norm(x)})")
    return float(projector_distance(u[:, None], v[:, None])[0])


def projector_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise sine distance between matching columns of ``a`` and ``b``.

    Uses the norm of the residual ``a - (a.b) b`` rather than
    ``sqrt(1 - (a.b)^2)``, which loses all digits below about 1.5e-8.
    """
    c = np.sum(a * b, axis=0)
    resid = np.linalg.norm(a - b * c, axis=0)
    return np.minimum(resid, 1.0)


def eigengaps(values: Sequence[float]) -> np.ndarray:
    """Distance from each value to zero and to every other value."""
    lam = np.asarray(values, dtype=float)
    gaps = np.abs(lam).copy()
    for j in range(lam.size):
        others = np.delete(lam, j)
        if others.size:
            gaps[j] = min(gaps[j], np.min(np.abs(others - lam[j])))
    return gaps


# -- coherence ---------------------------------------------------------------

@dataclass
class CoherenceReport:
    theta_k: list
    delta_k: list
    eta: list            # r x K, eta[j][k]
    theta: float         # over all given modes
    delta: float
    subset: list
    theta_S: float
    delta_S: float
    mu_S: float | None
    bounds: dict         # name -> value, each an upper bound on delta_S
    slack: dict          # name -> bound - delta_S

    def to_dict(self) -> dict:
        return asdict(self)


def _check_unit_columns(factors):
    for k, a in enumerate(factors):
        norms = np.linalg.norm(a, axis=0)
        if np.max(np.abs(norms - 1)) > UNIT_TOL:
            raise ValueError(f"factor {k} columns are not unit norm: {norms}")


def _max_offdiag(g: np.ndarray) -> float:
    r = g.shape[0]
    if r < 2:
        return 0.0
    return float(np.max(np.abs(g[~np.eye(r, dtype=bool)])))


def leave_two_out_coherence(grams: Sequence[np.ndarray], eta: np.ndarray) -> float:
    """Mutual coherence ``mu_S`` of the modes whose Gram matrices are given.

    ``eta`` is the ``r x |S|`` matrix of off-diagonal column norms. A ratio
    ``|sigma_ij| / eta_j`` with ``eta_j = 0`` is taken as 1.
    """
    s = len(grams)
    if s < 2:
        raise ValueError("leave-two-out coherence needs at least two modes")
    r = grams[0].shape[0]
    if r < 2:
        return 1.0
    root_r = math.sqrt(r)
    best = 0.0
    for j in range(r):
        others = [i for i in range(r) if i != j]
        ratios = np.ones((len(others), s))
        for pos, g in enumerate(grams):
            if eta[j, pos] > 0:
                ratios[:, pos] = root_r * np.abs(g[others, j]) / eta[j, pos]
            else:
                ratios[:, pos] = 1.0
        inner = math.inf
        for k1, k2 in itertools.combinations(range(s), 2):
            keep = [p for p in range(s) if p not in (k1, k2)]
            val = float(np.max(np.prod(ratios[:, keep], axis=1))) if keep else 1.0
            inner = min(inner, val)
        best = max(best, inner)
    return best


def coherence_report(factors: Sequence[np.ndarray],
                     subset: Sequence[int] | None = None) -> CoherenceReport:
    """All pairwise-coherence quantities of a factor set and the bounds on ``delta_S``.

    ``subset`` defaults to every mode, which gives the global ``delta`` and
    ``theta`` of the vectorized rank-one components.
    """
    factors = [np.asarray(a, dtype=float) for a in factors]
    _check_unit_columns(factors)
    n_modes = len(factors)
    r = factors[0].shape[1]
    subset = list(range(n_modes)) if subset is None else sorted(set(int(k) for k in subset))
    if not subset or any(not 0 <= k < n_modes for k in subset):
        raise ValueError(f"invalid mode subset {subset}")
    eye = np.eye(r)
    grams = [a.T @ a for a in factors]
    theta_k = [_max_offdiag(g) for g in grams]
    delta_k = [spectral_norm(g - eye) for g in grams]
    eta = np.array([[math.sqrt(float(np.sum(g[:, j] ** 2) - g[j, j] ** 2))
                     for g in grams] for j in range(r)])
    g_all = np.prod(grams, axis=0)
    theta = _max_offdiag(g_all)
    delta = spectral_norm(g_all - eye)

    g_s = np.prod([grams[k] for k in subset], axis=0)
    theta_s = _max_offdiag(g_s)
    delta_s = spectral_norm(g_s - eye)
    eta_s = eta[:, subset]
    bounds = {
        "min_delta_k": min(delta_k[k] for k in subset),
        "theta_S": (r - 1) * theta_s,
        "prod_theta_k": (r - 1) * float(np.prod([theta_k[k] for k in subset])),
    }
    mu = None
    if len(subset) >= 2:
        mu = leave_two_out_coherence([grams[k] for k in subset], eta_s)
        scale = mu * r ** (1 - len(subset) / 2)
        bounds["eta_product"] = scale * float(np.max(np.prod(eta_s, axis=1)))
        bounds["prod_delta_k"] = scale * float(np.prod([delta_k[k] for k in subset]))
    slack = {name: b - delta_s for name, b in bounds.items()}
    return CoherenceReport(theta_k, delta_k, eta.tolist(), theta, delta, subset,
                           theta_s, delta_s, mu, bounds, slack)


def component_gram(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Gram matrix of the vectorized rank-one components ``vec(o_k a_jk)``."""
    a = khatri_rao(factors)
    return a.T @ a


# -- matching ----------------------------------------------------------------

@dataclass
class MatchResult:
    permutation: np.ndarray   # estimate component perm[j] matches truth j
    errors: np.ndarray        # r x K sin-theta errors after matching
    max_error: float
    weight_rel_error: float


def match_components(est, truth) -> MatchResult:
    """Align estimated components with the truth and measure sin-theta errors.

    The assignment minimises ``sum_j (1 - mean_k |<a_hat, a>|)``; it is found
    by exhaustive search for rank up to 6 and by the Hungarian method above.
    Only the modes present in both decompositions are compared.
    """
    r = truth.rank
    if est.rank != r:
        raise ValueError(f"rank mismatch: estimate {est.rank}, truth {r}")
    n_modes = min(len(est.factors), len(truth.factors))
    cos = np.zeros((r, r))  # cos[j, i] = mean_k |<truth_j, est_i>|
    for k in range(n_modes):
        cos += np.abs(truth.factors[k].T @ est.factors[k])
    cos /= n_modes
    cost = 1.0 - cos
    if r <= 6:
        best, best_perm = math.inf, None
        for perm in itertools.permutations(range(r)):
            c = sum(cost[j, perm[j]] for j in range(r))
            if c < best - 1e-15:
                best, best_perm = c, perm
        perm = np.array(best_perm)
    else:
        _, perm = linear_sum_assignment(cost)
    errors = np.zeros((r, n_modes))
    for k in range(n_modes):
        errors[:, k] = projector_distance(est.factors[k][:, perm], truth.factors[k])
    wrel = float(np.max(np.abs(est.weights[perm] / truth.weights - 1)))
    return MatchResult(perm, errors, float(errors.max()), wrel)


# -- rates -------------------------------------------------------------------

@dataclass
class RateBundle:
    snr: float
    r_eff: float
    R0: float
    R_ideal: list          # r x K
    R_ideal_phi: list      # r x K at phi = phi0
    R_star: list           # r x N
    R_star_phi: list       # r x N at phi = phi0_star
    alpha: float
    alpha_star: float
    rho: float
    rho1: float
    rho_star: float
    phi0: float
    phi0_star: float
    eps: list              # r x K
    eps_star: list         # r x N

    def to_dict(self) -> dict:
        return asdict(self)


def _with_phi(base: np.ndarray, phi: float, include_self: bool) -> np.ndarray:
    row_sum = base.sum(axis=1, keepdims=True)
    extra = row_sum if include_self else row_sum - base
    return base + min(phi, 1.0) * extra


def snr_and_rates(lambdas, sigma: float, n: int, dims: Sequence[int],
                  psi0: float, C0: float = 1.0, delta_max: float = 0.0) -> RateBundle:
    """Closed-form signal-to-noise ratio and rate quantities.

    ``dims`` are the K observation modes of the spiked covariance model; the
    same list is read as the N modes of the general noisy CP model for the
    starred quantities. The "last mode" index in the rate formulas is the
    mode with the largest dimension. Quantities that require ``alpha > 0``
    (or ``alpha_star > 0``) are ``inf`` when that condition fails.
    """
    lam = np.sort(np.asarray(lambdas, dtype=float))[::-1]
    if np.any(lam <= 0):
        raise ValueError("weights must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    dims = np.asarray(dims, dtype=float)
    r, K = lam.size, dims.size
    d = float(np.prod(dims))
    last = int(np.argmax(dims))
    r_eff = float(lam.sum() / lam[0])
    snr = math.inf if sigma == 0 else float(lam.sum() / (sigma ** 2 * d))
    inv = 0.0 if sigma == 0 else 1.0 / snr
    R0 = math.sqrt((r_eff / n) * (1 + inv) * (1 + (r_eff / d) * inv))

    R = np.outer(sigma ** 2 / lam + sigma / np.sqrt(lam), np.sqrt(dims / n))
    ratio = lam[0] / lam[-1]
    alpha = math.sqrt(max(0.0, 1 - delta_max)) - (math.sqrt(r) + 1) * psi0 / math.sqrt(1 - 1 / (4 * r))
    if alpha > 0:
        c0a = C0 * alpha ** (2 - 2 * K)
        rho = c0a * ratio * psi0 ** (2 * K - 3)
        rho1 = c0a * math.sqrt(ratio * r / n) * psi0 ** (K - 2)
        R_rK1 = _with_phi(R, 1.0, include_self=False)[r - 1, last]
        phi0 = c0a * math.sqrt(2 * r / (1 - 1 / (4 * r))) * R_rK1
        R_phi = _with_phi(R, phi0, include_self=False)
        eps = c0a * R_phi
    else:
        rho = rho1 = phi0 = math.inf
        R_phi = _with_phi(R, 1.0, include_self=False)
        eps = np.full_like(R, math.inf)

    Rs = np.outer(sigma / lam, np.sqrt(dims))
    N = K
    alpha_s = math.sqrt(max(0.0, 1 - delta_max)) - (math.sqrt(r) + 1) * psi0
    if alpha_s > 0:
        rho_s = 6 * alpha_s ** (1 - N) * math.sqrt(r - 1) * ratio * psi0 ** (N - 2)
        Rs_rN1 = _with_phi(Rs, 1.0, include_self=True)[r - 1, last]
        phi0_s = (N - 1) / alpha_s * math.sqrt(2 * r) * Rs_rN1
        Rs_phi = _with_phi(Rs, phi0_s, include_self=True)
        eps_s = 6 * alpha_s ** (N - 1) * Rs_phi
    else:
        rho_s = phi0_s = math.inf
        Rs_phi = _with_phi(Rs, 1.0, include_self=True)
        eps_s = np.full_like(Rs, math.inf)

    return RateBundle(snr, r_eff, R0, R.tolist(), R_phi.tolist(), Rs.tolist(),
                      Rs_phi.tolist(), alpha, alpha_s, rho, rho1, rho_s, phi0,
                      phi0_s, np.asarray(eps).tolist(), np.asarray(eps_s).tolist())


# -- iteration counts --------------------------------------------------------

def _gamma_poly(order: int, variant: str):
    if variant == "symmetric":
        return (lambda g: g ** order - 3 * g ** (order - 1) + 2,
                3 - 3 / order, 3.0)
    if variant == "general":
        return (lambda g: g ** order - 2 * g ** (order - 1) + 1,
                2 - 2 / order, 2.0)
    raise ValueError(f"unknown variant {variant!r}; use 'symmetric' or 'general'")


def gamma_root(order: int, variant: str = "symmetric", tol: float = 1e-12) -> float:
    """Root of the contraction-order polynomial inside its bracket.

    ``symmetric``: ``g^K - 3 g^(K-1) + 2 = 0`` on ``(3 - 3/K, 3)``.
    ``general``:   ``g^N - 2 g^(N-1) + 1 = 0`` on ``(2 - 2/N, 2)``.
    """
    min_order = 2 if variant == "symmetric" else 3
    if order < min_order:
        raise ValueError(f"order must be >= {min_order} for the {variant} variant")
    p, lo, hi = _gamma_poly(order, variant)
    if not p(lo) < 0 < p(hi):
        raise ArithmeticError(f"no sign change on ({lo}, {hi})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if p(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def iteration_bound(psi0: float, eps: float, rho: float, order: int,
                    variant: str = "symmetric", all_modes: bool = False) -> int:
    """Number of full ICO sweeps after which the noiseless error bound is below ``eps``.

    By default evaluates ``ceil((1 + log(log(psi0/eps)/log(1/rho)) / log(gamma)) / order)``,
    the first sweep whose last-updated mode has ``psi_{m,order} <= eps``.
    With ``all_modes`` the count is ``ceil(1 + log(...) / (order log(gamma)))``,
    the first sweep with ``psi_{m,k} <= eps`` for every mode ``k``. Floored at
    one sweep.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    if not 0 < eps < psi0:
        raise ValueError(f"need 0 < eps < psi0, got eps={eps}, psi0={psi0}")
    gamma = gamma_root(order, variant)
    inner = math.log(math.log(psi0 / eps) / math.log(1 / rho)) / math.log(gamma)
    m = math.ceil(1 + inner / order) if all_modes else math.ceil((1 + inner) / order)
    return max(1, m)


def contraction_schedule(psi0: float, rho: float, order: int, sweeps: int,
                         variant: str = "symmetric") -> np.ndarray:
    """Per-(sweep, mode) error bounds ``psi0 * rho ** gamma**((m-1)K + k - 1)``."""
    gamma = gamma_root(order, variant)
    out = np.empty((sweeps, order))
    for m in range(1, sweeps + 1):
        for k in range(1, order + 1):
            out[m - 1, k - 1] = psi0 * rho ** (gamma ** ((m - 1) * order + k - 1))
    return out
