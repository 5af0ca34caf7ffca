"""Config-driven Monte Carlo comparison of CP estimators.

Every (grid point, replicate) cell draws its ground truth and data from
``make_rng(seed, grid, replicate)``; all methods in the cell consume the
same data. Randomized methods get their own stream
``make_rng(seed, grid, replicate, method_code)``.

Outputs
-------
``results.csv``
    One deterministic row per (grid, replicate, method), canonical order.
``timings.csv``
    Wall-clock milliseconds for the same rows (monotonic clock).
``summary.json``
    Per-cell quartiles of log10 error, per-method runtime, median orderings.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import ALS_LABEL, ALSConfig, als_fit, als_randomized, hosvd_init
from .coherence import match_components
from .cp_model import (RNG_ALGORITHM, covariance_tensor, data_matrix, gen_noisy_cp,
                       gen_spiked_samples, geometric_weights, make_rng, random_cp)
from .cpca import cpca_general, cpca_symmetric_from_data
from .ico import ICOConfig, ico_general, ico_symmetric_from_data

THREADS_ENV = "CPICO_THREADS"
MODELS = ("spiked-covariance", "noisy-cp")
METHODS = ("cpca", "cpca+ico", "cpca+1ico", "hosvd", "als", "cpca+als")
UNAVAILABLE = ("oals", "cpca+oals")
METHOD_CODES = {m: i + 1 for i, m in enumerate(METHODS)}
RESULT_COLUMNS = ("grid", "signal", "n", "replicate", "seed", "method", "status",
                  "max_error", "log10_error", "lambda_rel_error", "iterations")
TIMING_COLUMNS = ("grid", "replicate", "method", "wall_ms")


@dataclass
class ExperimentConfig:
    """One benchmark design.

    ``signal`` lists ``w_max`` values for the spiked model (weights are
    ``w^2``) and ``lambda_max`` values for the noisy CP model; ``ratio`` is
    the max/min ratio of the same quantity. ``n`` is ignored by the noisy
    CP model.
    """

    model: str
    dims: list
    rank: int
    signal: list
    ratio: float = 1.25
    theta: float = 10 ** -0.5
    sigma: float = 1.0
    n: list = field(default_factory=lambda: [400])
    replicates: int = 20
    methods: list = field(default_factory=lambda: ["cpca", "cpca+ico", "hosvd"])
    seed: int = 0
    name: str = "experiment"
    ico: dict = field(default_factory=dict)
    als: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        self.dims = [int(d) for d in self.dims]
        self.signal = [float(s) for s in self.signal]
        self.n = [int(x) for x in self.n]
        if not self.dims or not self.signal or not self.n:
            raise ValueError("dims, signal and n must be nonempty")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.model == "noisy-cp" and len(self.dims) < 3:
            raise ValueError("the noisy CP model needs at least three modes")
        if not 1 <= self.rank <= min(self.dims):
            raise ValueError(f"rank {self.rank} must lie in [1, {min(self.dims)}]")
        if self.rank >= 2 and not -1 / (self.rank - 1) < self.theta < 1:
            raise ValueError(f"coherence {self.theta} infeasible for rank {self.rank}")
        for m in self.methods:
            if m not in METHODS and m not in UNAVAILABLE:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
        self.ico_config = ICOConfig(**self.ico)
        self.als_config = ALSConfig(**self.als)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def grid(self) -> list:
        ns = self.n if self.model == "spiked-covariance" else [0]
        return list(itertools.product(self.signal, ns))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    rows: list
    timings: list
    summary: dict

    def results_csv(self) -> str:
        return _to_csv(RESULT_COLUMNS, self.rows)

    def timings_csv(self) -> str:
        return _to_csv(TIMING_COLUMNS, self.timings)

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"results": out / "results.csv", "timings": out / "timings.csv",
                 "summary": out / "summary.json"}
        paths["results"].write_text(self.results_csv(), newline="")
        paths["timings"].write_text(self.timings_csv(), newline="")
        paths["summary"].write_text(json.dumps(self.summary, indent=2, sort_keys=True))
        return {k: str(v) for k, v in paths.items()}


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.10e}"
    return v


def _to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns))  # RFC 4180: CRLF, minimal quoting
    writer.writeheader()
    for r in rows:
        writer.writerow({k: _fmt(r[k]) for k in columns})
    return buf.getvalue()


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


# -- one replicate --------------------------------------------------------------

class _Cell:
    """Ground truth, data and lazily built derived inputs for one replicate."""

    def __init__(self, cfg: ExperimentConfig, g: int, rep: int):
        self.cfg = cfg
        signal, n = cfg.grid()[g]
        rng = make_rng(cfg.seed, g, rep)
        self.spiked = cfg.model == "spiked-covariance"
        w = geometric_weights(signal, cfg.ratio, cfg.rank)
        lam = w ** 2 if self.spiked else w
        self.truth = random_cp(cfg.dims, lam, cfg.theta, rng, symmetric_pair=self.spiked)
        if self.spiked:
            self.batch = gen_spiked_samples(self.truth, n, cfg.sigma, rng)
            self.data = data_matrix(self.batch)
            self._tensor = None
        else:
            self._tensor = gen_noisy_cp(self.truth, cfg.sigma, rng)
        self._cpca = None

    @property
    def tensor(self):
        if self._tensor is None:
            self._tensor = covariance_tensor(self.batch)
        return self._tensor

    def cpca(self):
        if self._cpca is None:
            r = self.cfg.rank
            if self.spiked:
                self._cpca = cpca_symmetric_from_data(self.data, self.cfg.dims, r).cp
            else:
                self._cpca = cpca_general(self._tensor, r).cp
        return self._cpca

    def run(self, method: str, rng):
        """Return ``(estimate, iterations)``."""
        cfg, r = self.cfg, self.cfg.rank
        if method == "cpca":
            return self.cpca(), 0
        if method in ("cpca+ico", "cpca+1ico"):
            ico_cfg = cfg.ico_config
            if method == "cpca+1ico":
                ico_cfg = ICOConfig(tol=ico_cfg.tol, max_iter=1, ridge=ico_cfg.ridge)
            if self.spiked:
                est, tr = ico_symmetric_from_data(self.data, cfg.dims, r, self.cpca(), ico_cfg)
            else:
                est, tr = ico_general(self._tensor, r, self.cpca(), ico_cfg)
            return est, tr.iterations
        if method == "hosvd":
            return hosvd_init(self.tensor, r, symmetric=self.spiked), 0
        if method == "als":
            est, tr = als_randomized(self.tensor, r, cfg.als_config, rng, symmetric=self.spiked)
            return est, tr.iterations
        if method == "cpca+als":
            est, tr = als_fit(self.tensor, self.cpca(), cfg.als_config, symmetric=self.spiked)
            return est, tr.iterations
        raise ValueError(f"unknown method {method!r}")


def _run_replicate(cfg: ExperimentConfig, g: int, rep: int):
    signal, n = cfg.grid()[g]
    cell = _Cell(cfg, g, rep)
    rows, timings = [], []
    for method in cfg.methods:
        if method in UNAVAILABLE:
            continue
        rng = make_rng(cfg.seed, g, rep, METHOD_CODES[method])
        start = time.perf_counter_ns()
        try:
            est, iters = cell.run(method, rng)
            m = match_components(est, cell.truth)
            err, lam_err, status = m.max_error, m.weight_rel_error, "ok"
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            # no usable estimate: charge the largest possible sine distance
            err, lam_err, iters, status = 1.0, math.nan, 0, f"failed: {exc}"
        wall = (time.perf_counter_ns() - start) / 1e6
        rows.append({"grid": g, "signal": signal, "n": n, "replicate": rep,
                     "seed": cfg.seed, "method": method, "status": status,
                     "max_error": float(err), "log10_error": math.log10(max(err, 1e-300)),
                     "lambda_rel_error": float(lam_err), "iterations": int(iters)})
        timings.append({"grid": g, "replicate": rep, "method": method, "wall_ms": wall})
    return rows, timings


# -- summary ----------------------------------------------------------------

def _summarise(cfg: ExperimentConfig, rows: list, timings: list) -> dict:
    cells = []
    methods = [m for m in cfg.methods if m not in UNAVAILABLE]
    for g, (signal, n) in enumerate(cfg.grid()):
        medians = {}
        for m in methods:
            errs = np.array([r["log10_error"] for r in rows
                             if r["grid"] == g and r["method"] == m])
            failed = sum(1 for r in rows
                         if r["grid"] == g and r["method"] == m and r["status"] != "ok")
            entry = {"grid": g, "signal": signal, "n": n, "method": m,
                     "replicates": int(errs.size), "failed": failed}
            if errs.size:
                q1, med, q3 = np.percentile(errs, [25, 50, 75])
                entry.update(median_log10_error=float(med), q1=float(q1), q3=float(q3))
                medians[m] = float(med)
            cells.append(entry)
        order = sorted(medians, key=lambda m: (medians[m], methods.index(m)))
        cells.append({"grid": g, "signal": signal, "n": n, "median_order": order,
                      "pairwise": {f"{a} < {b}": medians[a] < medians[b]
                                   for a, b in itertools.permutations(order, 2)}})
    runtime = {}
    for m in methods:
        ms = np.array([t["wall_ms"] for t in timings if t["method"] == m])
        runtime[m] = {"mean_ms": float(ms.mean()), "sd_ms": float(ms.std(ddof=1)) if ms.size > 1 else 0.0}
    return {"name": cfg.name, "model": cfg.model, "rng": RNG_ALGORITHM,
            "labels": {"als": ALS_LABEL, "cpca+als": f"cpca + {ALS_LABEL}"},
            "unavailable_methods": [m for m in cfg.methods if m in UNAVAILABLE],
            "cells": cells, "runtime": runtime}


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int | None = None
                   ) -> ExperimentResult:
    """Run every (grid, replicate) cell and collect rows in canonical order."""
    threads = threads or default_threads()
    tasks = [(g, rep) for g in range(len(cfg.grid())) for rep in range(cfg.replicates)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outs = list(pool.map(lambda a: _run_replicate(cfg, *a), tasks))
    else:
        outs = [_run_replicate(cfg, *a) for a in tasks]
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows = sorted((r for o in outs for r in o[0]),
                  key=lambda r: (r["grid"], r["replicate"], order[r["method"]]))
    timings = sorted((t for o in outs for t in o[1]),
                     key=lambda t: (t["grid"], t["replicate"], order[t["method"]]))
    result = ExperimentResult(rows, timings, _summarise(cfg, rows, timings))
    if out_dir is not None:
        result.write(out_dir)
    return result
