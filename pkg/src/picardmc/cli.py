"""Command line interface: ``picardmc <command> ...``.

Exit codes: 0 success, 1 user error (bad arguments, config or domain
errors), 2 internal error.  CSV outputs get a ``<file>.meta.json`` sidecar
carrying provenance; JSON outputs embed it under ``provenance``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .allocation import (
    AllocationError,
    ObjectiveParams,
    allocate_exact,
    allocate_paper,
    allocate_uniform,
    allocation_table,
    budget_total,
    min_variance_report,
    objective_Z,
)
from .combinatorics import coeff_A, d_sequence, poly
from .config import ConfigError, RunConfig, parse_config
from .convolution import TermKernelSpec, estimate_K, quadrature_oracle
from .error_ci import FitError, ci_for_run, optimal_n, combined_error
from .estimate import EstimateWithError, EstimatorError
from .fields import KINDS, TestField
from .heat import heat_grid_mc
from .iteration import IterationError, SolutionEstimate, iterate_nested, iterate_solution, allocation_from_config
from .riesz import RieszParams, default_outer_radius, riesz_truncated_mc
from .sampling import DomainError, dirichlet_chain_sample, gaussian_block_sample, pb_half_sample, uniform_simplex_sample
from .streams import RandomStream
from .terms import ExpansionTooLarge

OUTDIR_ENV = "MCPICARD_OUTDIR"
USER_ERRORS = (ConfigError, AllocationError, FitError, IterationError, DomainError, ExpansionTooLarge,
               EstimatorError, ValueError, FileNotFoundError, NotImplementedError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# output helpers


def _provenance(seed=None, config: Optional[RunConfig] = None, args: Optional[dict] = None) -> dict:
    if config is not None:
        digest = config.digest()
    else:
        clean = {k: v for k, v in (args or {}).items() if not callable(v) and k != "out"}
        blob = json.dumps(clean, sort_keys=True, default=str)
        digest = hashlib.sha256(blob.encode()).hexdigest()
    return {"config_hash": digest, "seed": seed, "version": __version__}


def _resolve(path: Optional[str]) -> Optional[Path]:
    if path is None or path == "-":
        base = os.environ.get(OUTDIR_ENV)
        return None if path == "-" or base is None else Path(base)
    p = Path(path)
    base = os.environ.get(OUTDIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _default_out(path: Optional[str], name: str) -> Optional[Path]:
    p = _resolve(path)
    if p is not None and path is None:
        p = p / name
    return p


def _write_text(path: Optional[Path], text: str):
    if path is None:
        sys.stdout.write(text)
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path: Optional[Path], header, rows, meta: dict):
    _write_text(path, _csv_text(header, rows))
    if path is not None:
        _write_text(path.with_name(path.name + ".meta.json"), _json_text(meta))


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path: Optional[Path], obj: dict):
    _write_text(path, _json_text(obj))


def solution_header(d: int) -> List[str]:
    return [f"x{i + 1}" for i in range(d)] + ["t", "component", "value", "stderr"]


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",")] if text else []
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _field_arg(text: str, d: int) -> TestField:
    """``kind:p1,p2,...`` or a JSON object ``{"kind": ..., "params": [...]}``."""
    if text.lstrip().startswith("{"):
        decl = json.loads(text)
        return TestField(decl["kind"], tuple(decl.get("params", ())), d)
    kind, _, params = text.partition(":")
    if kind not in KINDS:
        raise UsageError(f"unknown field kind {kind!r}; expected one of {KINDS}")
    return TestField(kind, tuple(_floats(params)), d)


def _config(args) -> RunConfig:
    cfg = parse_config(args.config)
    changes = {}
    for key in ("seed", "n", "budget", "workers"):
        v = getattr(args, key, None)
        if v is not None:
            changes[key] = v
    if getattr(args, "N", None) is not None:
        changes["heat_samples"] = args.N
    if getattr(args, "alloc", None) is not None:
        al = cfg.alloc.to_dict()
        al["method"] = args.alloc
        if getattr(args, "alloc_file", None):
            entries = json.loads(Path(args.alloc_file).read_text())
            al["entries"] = {int(k): int(v) for k, v in entries.items()}
        changes["alloc"] = al
    return cfg.replace(**changes) if changes else cfg


# ---------------------------------------------------------------------------
# commands


def cmd_dist(args) -> int:
    st = RandomStream(args.seed)
    if args.kind == "gaussian":
        z = gaussian_block_sample(args.m, args.d, st, size=args.count).z.reshape(args.count, -1)
        header = [f"z{j + 1}_{k + 1}" for j in range(args.m) for k in range(args.d)]
        rows = z.tolist()
    else:
        if args.kind == "uniform_simplex":
            pt = uniform_simplex_sample(args.m, st, size=args.count)
        elif args.kind == "pb_half":
            pt = pb_half_sample(args.m, st, size=args.count)
        else:
            alphas = _floats(args.alphas)
            if len(alphas) != args.m:
                raise UsageError(f"--alphas needs {args.m} values")
            pt = dirichlet_chain_sample(alphas, st, size=args.count)
        header = [f"tau{j + 1}" for j in range(args.m)]
        rows = np.asarray(pt.coords).reshape(args.count, args.m).tolist()
    meta = {"provenance": _provenance(args.seed, args=vars(args)), "kind": args.kind, "count": args.count}
    write_csv(_default_out(args.out, "samples.csv"), header, rows, meta)
    return 0


def cmd_comb(args) -> int:
    if args.what == "dn":
        print(d_sequence(args.n, args.d))
    elif args.what == "poly":
        print(" ".join(str(c) for c in poly(args.n).as_list()))
    else:
        print(coeff_A(args.m, args.n))
    return 0


def cmd_heat(args) -> int:
    cfg = _config(args)
    grid = cfg.build_grid()
    a, f = cfg.fields_a(), cfg.fields_f()
    st = RandomStream(cfg.seed)
    vals = np.zeros((len(grid), cfg.d))
    errs = np.zeros((len(grid), cfg.d))
    for i in range(cfg.d):
        if a[i] is None and f[i] is None:
            continue
        est = heat_grid_mc(a[i], f[i], grid, cfg.heat_samples, st.child(i), cfg.chunk_size, cfg.workers)
        vals[:, i], errs[:, i] = est.value, est.stderr
    sol = SolutionEstimate(grid, EstimateWithError(vals, cfg.heat_samples, errs),
                           EstimateWithError(np.zeros((len(grid), cfg.d, cfg.d)), cfg.heat_samples,
                                             np.zeros((len(grid), cfg.d, cfg.d))),
                           2 * cfg.heat_samples * cfg.d, method="heat")
    meta = {"provenance": _provenance(cfg.seed, cfg), "n_samples": cfg.heat_samples, "columns": solution_header(cfg.d)}
    write_csv(_default_out(args.out, "heat.csv"), solution_header(cfg.d), sol.rows(), meta)
    return 0


def cmd_term(args) -> int:
    x = np.array(_floats(args.x))
    d = x.size
    h = _field_arg(args.field, d)
    derivs = tuple(int(k) - 1 for k in _floats(args.derivs)) if args.derivs else ()
    order = tuple(args.order.split(",")) if args.order else ()
    if args.kind == "I":
        spec = TermKernelSpec(args.m1, 0)
    elif args.kind == "J":
        spec = TermKernelSpec(0, args.m2, derivs)
    else:
        spec = TermKernelSpec(args.m1, args.m2, derivs, order)
    est = estimate_K(h, spec, x, args.t, args.N, RandomStream(args.seed))
    out = {"provenance": _provenance(args.seed, args=vars(args)), "estimate": est.to_dict(),
           "spec": {"m1": spec.m1, "m2": spec.m2, "deriv_indices": [k + 1 for k in spec.deriv_indices],
                    "order": list(spec.order)}}
    if args.quadrature:
        out["quadrature"] = quadrature_oracle(h, spec, x, args.t)
    write_json(_default_out(args.out, "term.json"), out)
    return 0


def cmd_riesz(args) -> int:
    x = np.array(_floats(args.x))
    h = _field_arg(args.field, x.size)
    p = RieszParams(args.eps, args.R if args.R is not None else default_outer_radius(h), args.N, args.seed)
    est = riesz_truncated_mc(h, args.k - 1, x, p.eps, p.R, p.N, RandomStream(args.seed))
    out = {"provenance": _provenance(args.seed, args=vars(args)), "estimate": est.to_dict(), "k": args.k}
    write_json(_default_out(args.out, "riesz.json"), out)
    return 0


def cmd_iterate(args) -> int:
    cfg = _config(args)
    if args.nested:
        sol = iterate_nested(cfg)
        alloc_info = {"nested": list(cfg.nested)}
    else:
        alloc = allocation_from_config(cfg)
        sol = iterate_solution(cfg, alloc)
        alloc_info = {str(k): v for k, v in alloc.entries.items()}
    n_samples = int(sol.values.n_samples)
    out = _default_out(args.out, "solution.csv")
    meta = {"provenance": _provenance(cfg.seed, cfg), "n_samples": n_samples, "columns": solution_header(cfg.d)}
    write_csv(out, solution_header(cfg.d), sol.rows(), meta)
    summary = {"provenance": meta["provenance"], "allocation": alloc_info, **sol.summary()}
    summary_path = out.with_suffix(".json") if out is not None else None
    if summary_path is not None:
        write_json(summary_path, summary)
    return 0


def cmd_allocate(args) -> int:
    p = ObjectiveParams(args.n, args.d, args.b, args.with_t or 1.0, args.budget, args.with_t is not None)
    fn = {"exact": allocate_exact, "paper": allocate_paper, "uniform": allocate_uniform}[args.method]
    alloc = fn(p)
    rows = [(r["k"], r["A"], r["N"], r["spend"], r["z"]) for r in allocation_table(alloc, p)]
    meta = {"provenance": _provenance(None, args=vars(args)), "method": args.method,
            "budget_used": budget_total(alloc, p.n, p.d), "Z": objective_Z(alloc, p),
            "report": min_variance_report(p).to_dict()}
    write_csv(_default_out(args.out, "allocation.csv"), ["k", "A", "N", "spend", "z_contribution"], rows, meta)
    return 0


def _load_run(csv_path: Path) -> EstimateWithError:
    meta_path = csv_path.with_name(csv_path.name + ".meta.json")
    if not meta_path.is_file():
        raise ConfigError("", f"missing sidecar {meta_path.name} for {csv_path.name}")
    n = int(json.loads(meta_path.read_text())["n_samples"])
    with csv_path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0] or "stderr" not in rows[0]:
        raise ConfigError("", f"{csv_path.name} lacks value/stderr columns")
    return EstimateWithError(np.array([float(r["value"]) for r in rows]), n,
                             np.array([float(r["stderr"]) for r in rows]))


def cmd_report(args) -> int:
    if args.what == "ci":
        d = Path(args.runs)
        if not d.is_dir():
            raise FileNotFoundError(f"runs directory {str(d)!r} not found")
        runs = [_load_run(p) for p in sorted(d.glob("*.csv"))]
        rep = ci_for_run(runs, args.delta, args.kappa)
        out = {"provenance": _provenance(None, args={"runs": sorted(p.name for p in d.glob('*.csv')),
                                                     "delta": args.delta}), **rep.to_dict()}
    else:
        n_star = optimal_n(args.q, args.budget, args.c, args.d, args.n_max)
        table = []
        for n in range(1, args.n_max + 1):
            D = d_sequence(n, args.d)
            table.append({"n": n, "D": str(D), "feasible": D * D <= args.budget,
                          "error": combined_error(args.q, n, args.budget, args.c, args.d)})
        out = {"provenance": _provenance(None, args=vars(args)), "n_opt": n_star, "table": table}
    write_json(_default_out(args.out, f"report_{args.what.replace('-', '_')}.json"), _finite(out))
    return 0


def _finite(obj):
    """Replace non-finite floats with strings so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="picardmc", description="Monte Carlo Picard iteration for heat and Navier-Stokes mild solutions.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("dist", help="sample Gaussian blocks or simplex points")
    ss = s.add_subparsers(dest="action", parser_class=_Parser)
    q = ss.add_parser("sample")
    q.add_argument("--kind", choices=["gaussian", "uniform_simplex", "pb_half", "dirichlet"], required=True)
    q.add_argument("--m", type=int, required=True)
    q.add_argument("--d", type=int, default=1)
    q.add_argument("--alphas", default="")
    q.add_argument("--count", type=int, default=1000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_dist)

    s = sub.add_parser("comb", help="exact combinatorial tables")
    ss = s.add_subparsers(dest="what", parser_class=_Parser)
    q = ss.add_parser("dn")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--d", type=int, default=3)
    q = ss.add_parser("poly")
    q.add_argument("--n", type=int, required=True)
    q = ss.add_parser("coeff")
    q.add_argument("--m", type=int, required=True)
    q.add_argument("--n", type=int, required=True)
    for q in ss.choices.values():
        q.set_defaults(func=cmd_comb)

    s = sub.add_parser("heat", help="linear heat problem")
    ss = s.add_subparsers(dest="action", parser_class=_Parser)
    q = ss.add_parser("solve")
    q.add_argument("--config", required=True)
    q.add_argument("--N", type=int)
    q.add_argument("--seed", type=int)
    q.add_argument("--workers", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_heat)

    s = sub.add_parser("term", help="iterated heat convolution estimators")
    ss = s.add_subparsers(dest="action", parser_class=_Parser)
    q = ss.add_parser("estimate")
    q.add_argument("--kind", choices=["I", "J", "K"], required=True)
    q.add_argument("--m1", type=int, default=0)
    q.add_argument("--m2", type=int, default=0)
    q.add_argument("--derivs", default="", help="1-based derivative coordinates, comma separated")
    q.add_argument("--order", default="", help="step kinds from the evaluation point inwards, e.g. plain,grad")
    q.add_argument("--field", required=True, help="kind:p1,p2,... or JSON")
    q.add_argument("--x", required=True)
    q.add_argument("--t", type=float, required=True)
    q.add_argument("--N", type=int, default=10000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--quadrature", action="store_true")
    q.add_argument("--out")
    q.set_defaults(func=cmd_term)

    s = sub.add_parser("riesz", help="truncated Riesz transform")
    ss = s.add_subparsers(dest="action", parser_class=_Parser)
    q = ss.add_parser("estimate")
    q.add_argument("--k", type=int, required=True, help="1-based coordinate")
    q.add_argument("--field", required=True)
    q.add_argument("--x", required=True)
    q.add_argument("--eps", type=float, default=1e-3)
    q.add_argument("--R", type=float, help="outer radius (default: 10x the field support radius)")
    q.add_argument("--N", type=int, default=10000)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out")
    q.set_defaults(func=cmd_riesz)

    q = sub.add_parser("iterate", help="Picard iteration on a grid")
    q.add_argument("--config", required=True)
    q.add_argument("--n", type=int)
    q.add_argument("--alloc", choices=["exact", "paper", "uniform", "file"])
    q.add_argument("--alloc-file", help="JSON object k -> N(k) for --alloc file")
    q.add_argument("--budget", type=int)
    q.add_argument("--seed", type=int)
    q.add_argument("--workers", type=int)
    q.add_argument("--nested", action="store_true", help="use the nested baseline estimator")
    q.add_argument("--out")
    q.set_defaults(func=cmd_iterate)

    q = sub.add_parser("allocate", help="split a variate budget across degree groups")
    q.add_argument("--budget", type=int, required=True)
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--b", type=float, required=True)
    q.add_argument("--with-t", type=float, dest="with_t")
    q.add_argument("--method", choices=["exact", "paper", "uniform"], default="exact")
    q.add_argument("--out")
    q.set_defaults(func=cmd_allocate)

    s = sub.add_parser("report", help="confidence radii and depth selection")
    ss = s.add_subparsers(dest="what", parser_class=_Parser)
    q = ss.add_parser("ci")
    q.add_argument("--runs", required=True)
    q.add_argument("--delta", type=float, default=0.05)
    q.add_argument("--kappa", type=float, default=1.0)
    q.add_argument("--out")
    q = ss.add_parser("optimal-n")
    q.add_argument("--q", type=float, required=True)
    q.add_argument("--budget", type=int, required=True)
    q.add_argument("--c", type=float, default=1.0)
    q.add_argument("--d", type=int, default=3)
    q.add_argument("--n-max", type=int, default=8, dest="n_max")
    q.add_argument("--out")
    for q in ss.choices.values():
        q.set_defaults(func=cmd_report)
    return p


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "func"):
            raise UsageError(parser.format_help())
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip() + "\n")
        return 1
    except USER_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
