"""Command-line entry point: ``cpico {generate,fit,diagnose,verify,bench}``.

Exit status is 0 on success, 1 on a usage or input error, and 2 on a
numerical failure (or a failed ``verify``).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import ALSConfig, als_fit, als_randomized, hosvd_init
from .bench import ExperimentConfig, default_threads, run_experiment
from .coherence import coherence_report, match_components, snr_and_rates
from .cp_model import (CPDecomposition, covariance_tensor, data_matrix, gen_noisy_cp,
                       gen_spiked_samples, geometric_weights, make_rng, random_cp)
from .cpca import cpca_general, cpca_symmetric, cpca_symmetric_from_data
from .ico import ICOConfig, ico_general, ico_symmetric, ico_symmetric_from_data
from .propcheck import PROPS, run_check
from .tensor_core import read_tensor, unfold_group, write_tensor

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
FIT_METHODS = ("cpca", "cpca+ico", "ico", "hosvd", "als", "cpca+als")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(suppress: bool) -> argparse.ArgumentParser:
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(None),
                   help="master RNG seed (default 0; bench: the config's seed)")
    p.add_argument("--threads", type=int, default=default(None),
                   help="worker threads (default: $CPICO_THREADS or 1)")
    p.add_argument("--out-dir", default=default("."), help="directory for output files")
    p.add_argument("--format", choices=("json", "csv"), default=default("json"),
                   help="stdout format")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cpico", parents=[_common(False)],
                     description="CP decomposition by composite PCA and ICO refinement")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common(True)

    g = sub.add_parser("generate", parents=[common], help="synthetic tensor and ground truth")
    g.add_argument("--model", choices=("spiked-covariance", "noisy-cp"), required=True)
    g.add_argument("--dims", type=int, nargs="+", required=True,
                   help="K observation modes (spiked) or N tensor modes (noisy-cp)")
    g.add_argument("--rank", type=int, required=True)
    g.add_argument("--signal", type=float, required=True,
                   help="w_max for the spiked model, lambda_max for noisy-cp")
    g.add_argument("--ratio", type=float, default=1.25)
    g.add_argument("--theta", type=float, default=10 ** -0.5)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--n", type=int, default=400, help="sample size (spiked model)")

    f = sub.add_parser("fit", parents=[common], help="fit a CP decomposition to a tensor file")
    f.add_argument("--input", required=True, help="tensor file (or d x n data matrix)")
    f.add_argument("--rank", type=int, required=True)
    f.add_argument("--method", choices=FIT_METHODS, default="cpca+ico")
    f.add_argument("--model", choices=("general", "covariance", "samples"), default=None,
                   help="input kind; default: covariance when the paired unfolding is "
                        "symmetric, general otherwise")
    f.add_argument("--dims", type=int, nargs="+", help="observation dims for --model samples")
    f.add_argument("--init", help="decomposition JSON to start ICO or ALS from")
    f.add_argument("--truth", help="ground-truth JSON; adds true errors to the trace")
    f.add_argument("--tol", type=float, default=ICOConfig.tol)
    f.add_argument("--max-iter", type=int, default=ICOConfig.max_iter)
    f.add_argument("--ridge", type=float, default=0.0)
    f.add_argument("--restarts", type=int, default=ALSConfig.restarts)

    d = sub.add_parser("diagnose", parents=[common], help="coherence and rate quantities")
    d.add_argument("--truth", required=True, help="ground-truth decomposition JSON")
    d.add_argument("--sigma", type=float, default=1.0)
    d.add_argument("--n", type=int, default=400)
    d.add_argument("--psi0", type=float, default=0.1, help="initial error level")
    d.add_argument("--subset", type=int, nargs="+", help="0-based modes of S")

    v = sub.add_parser("verify", parents=[common], help="certify the perturbation bounds")
    v.add_argument("--prop", type=int, action="append", choices=PROPS,
                   help="bound check id (repeatable; default all)")
    v.add_argument("--trials", type=int, default=1000)

    b = sub.add_parser("bench", parents=[common], help="run a benchmark config")
    b.add_argument("--config", required=True, help="TOML experiment file")
    return parser


# -- commands ---------------------------------------------------------------

def _emit(obj, fmt: str, out=None):
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")
        return
    rows = [_flatten(r) for r in obj] if isinstance(obj, list) else [_flatten(obj)]
    buf = io.StringIO()
    cols = list(dict.fromkeys(k for r in rows for k in r))
    w = csv.DictWriter(buf, fieldnames=cols)
    w.writeheader()
    w.writerows(rows)
    out.write(buf.getvalue())


def _flatten(obj, prefix=""):
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(v)
        else:
            out[key] = v
    return out


def _load_cp(path) -> CPDecomposition:
    return CPDecomposition.from_json(Path(path).read_text())


def cmd_generate(args) -> dict:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(args.seed)
    spiked = args.model == "spiked-covariance"
    w = geometric_weights(args.signal, args.ratio, args.rank)
    truth = random_cp(args.dims, w ** 2 if spiked else w, args.theta, rng, symmetric_pair=spiked)
    files = {"truth": str(out / "truth.json"), "tensor": str(out / "tensor.tns")}
    if spiked:
        batch = gen_spiked_samples(truth, args.n, args.sigma, rng, seed=args.seed)
        write_tensor(files["tensor"], covariance_tensor(batch))
        files["data"] = str(out / "data.tns")
        write_tensor(files["data"], data_matrix(batch))
    else:
        write_tensor(files["tensor"], gen_noisy_cp(truth, args.sigma, rng))
    Path(files["truth"]).write_text(truth.to_json(indent=2))
    return {"model": args.model, "seed": args.seed, "files": files}


def _input_kind(args, t) -> str:
    if args.model:
        return args.model
    k = t.ndim // 2
    if t.ndim % 2 == 0 and t.shape[:k] == t.shape[k:]:
        m = unfold_group(t, range(k))
        if np.allclose(m, m.T, rtol=1e-10, atol=1e-12 * np.abs(m).max()):
            return "covariance"
    return "general"


def cmd_fit(args) -> dict:
    t = read_tensor(args.input)
    kind = _input_kind(args, t)
    r = args.rank
    if kind == "samples":
        if not args.dims:
            raise UsageError("--model samples needs --dims")
        if t.ndim != 2:
            raise UsageError("--model samples expects a d x n data matrix")
    truth = _load_cp(args.truth) if args.truth else None
    init = _load_cp(args.init) if args.init else None
    ico_cfg = ICOConfig(tol=args.tol, max_iter=args.max_iter, ridge=args.ridge)
    als_cfg = ALSConfig(restarts=args.restarts)
    symmetric = kind != "general"
    method = args.method
    if method == "ico" and init is None:
        raise UsageError("--method ico needs --init")
    if kind == "samples" and method in ("hosvd", "als", "cpca+als"):
        raise UsageError(f"--method {method} needs a tensor, not a data matrix")

    def cpca():
        if kind == "samples":
            return cpca_symmetric_from_data(t, args.dims, r).cp
        return (cpca_symmetric(t, r) if symmetric else cpca_general(t, r)).cp

    trace = None
    if method == "cpca":
        est = cpca()
    elif method in ("cpca+ico", "ico"):
        start = init if method == "ico" else cpca()
        if kind == "samples":
            est, trace = ico_symmetric_from_data(t, args.dims, r, start, ico_cfg, truth)
        elif symmetric:
            est, trace = ico_symmetric(t, r, start, ico_cfg, truth)
        else:
            est, trace = ico_general(t, r, start, ico_cfg, truth)
    elif method == "hosvd":
        est = hosvd_init(t, r, symmetric=symmetric)
    elif method == "als":
        est, trace = als_randomized(t, r, als_cfg, make_rng(args.seed), symmetric=symmetric)
    else:
        start = init if init is not None else cpca()
        est, trace = als_fit(t, start, als_cfg, symmetric=symmetric)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"decomposition": str(out / "decomposition.json")}
    Path(files["decomposition"]).write_text(est.to_json(indent=2))
    result = {"method": method, "model": kind, "rank": r,
              "decomposition": est.to_dict(), "files": files}
    if trace is not None:
        files["trace"] = str(out / "trace.csv")
        Path(files["trace"]).write_text(trace.to_csv())
        result.update(iterations=trace.iterations, stop_reason=trace.stop_reason)
    if truth is not None:
        m = match_components(est, truth)
        result.update(max_error=m.max_error, lambda_rel_error=m.weight_rel_error)
    return result


def cmd_diagnose(args) -> dict:
    truth = _load_cp(args.truth)
    rep = coherence_report(truth.factors, args.subset)
    rates = snr_and_rates(truth.weights, args.sigma, args.n, truth.dims, args.psi0,
                          delta_max=max(rep.delta_k))
    return {"coherence": rep.to_dict(), "rates": rates.to_dict()}


def cmd_verify(args) -> dict:
    props = args.prop or list(PROPS)
    reports = [run_check(p, args.trials, args.seed, args.threads or default_threads())
               for p in props]
    return {"passed": all(r.passed for r in reports),
            "reports": [r.to_dict() for r in reports]}


def cmd_bench(args) -> dict:
    cfg = ExperimentConfig.load(args.config)
    if args.seed_given:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    res = run_experiment(cfg, out_dir=args.out_dir, threads=args.threads)
    files = {k: str(Path(args.out_dir) / f) for k, f in
             (("results", "results.csv"), ("timings", "timings.csv"),
              ("summary", "summary.json"))}
    return {"name": cfg.name, "rows": len(res.rows), "files": files,
            "summary": res.summary}


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "diagnose": cmd_diagnose,
            "verify": cmd_verify, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be positive")
    args.seed_given = args.seed is not None
    if not args.seed_given:
        args.seed = 0
    try:
        result = COMMANDS[args.command](args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        print(f"cpico {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"cpico {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.command == "fit" and args.format == "csv":
        trace_file = result["files"].get("trace")
        sys.stdout.write(Path(trace_file).read_text() if trace_file else "")
    elif args.command == "verify" and args.format == "csv":
        _emit(result["reports"], "csv")
    else:
        _emit(result, args.format)
    if args.command == "verify" and not result["passed"]:
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
