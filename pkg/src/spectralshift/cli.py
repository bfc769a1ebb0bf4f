"""Command-line front end: ``dd``, ``compute-ssf``, ``verify`` and ``report``.

Exit codes: 0 success, 1 failed verification, 2 bad input (parse errors,
non-Hermitian matrices), 3 evaluation failure, 4 size envelope exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .divdiff import divided_difference
from .funcspace import FunctionSpecError, parse_function_spec
from .moi import METHODS, kernel_trace_identity, trace_derivative
from .multimeasure import EnvelopeError, build_m, total_variation
from .spectral import HermitianError, decompose, hs_norm, load_matrix
from .ssf import VARIANTS, random_pair, ssf_densities, trace_formula_check

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_EVAL, EXIT_ENVELOPE = 0, 1, 2, 3, 4

TRACE_TOL = 1e-6
TRACE_TOL_EXACT = 1e-8          # polynomial and rational families
ALGEBRAIC_TOL = 1e-9
FD_TOL = 1e-5
KERNEL_TOL = 1e-8
MASS_TOL = 1e-9
SUPPORT_TOL = 1e-12
VARIANT_TOL = 1e-9
CLOSED_FORM_TOL = 1e-12
GRID_POINTS = 1000


class InputError(ValueError):
    """Command-line input that cannot be parsed."""


@dataclass(frozen=True)
class RunConfig:
    command: str
    h0_path: str | None = None
    v_path: str | None = None
    p: int = 1
    variant: str = "nup1"
    function_spec: str | None = None
    knots: str | None = None
    grid: str | None = None
    cluster_tol: float | None = None
    seed: int = 0
    out: str | None = None
    count: int = 5
    n: int | None = None
    workers: int = 1
    corrupt_eta: float = 0.0
    dump_measure: str | None = None
    report_path: str | None = None

    def __post_init__(self):
        if self.p < 1:
            raise InputError(f"--p must be >= 1, got {self.p}")
        if self.variant not in VARIANTS:
            raise InputError(f"--variant must be one of {VARIANTS}")


def parse_grid(text: str) -> np.ndarray:
    """``a:b:m`` -> ``m`` uniform samples on ``[a, b]`` (``m >= 2``, ``a < b``)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"grid must look like a:b:m, got {text!r}")
    try:
        a, b, m = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise InputError(f"bad grid {text!r}: {exc}") from exc
    if m < 2 or not a < b:
        raise InputError(f"grid needs m >= 2 and a < b, got {text!r}")
    return np.linspace(a, b, m)


def parse_knots(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad knot list {text!r}: {exc}") from exc


def _atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary sibling, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cx(z) -> list:
    z = complex(z)
    return [z.real, z.imag + 0.0]


def _fmt(x: float) -> str:
    return f"{x + 0.0:.15g}"


# ---------------------------------------------------------------- dd

def cmd_dd(cfg: RunConfig) -> int:
    if not cfg.function_spec or not cfg.knots:
        raise InputError("dd needs --f and --knots")
    f = parse_function_spec(cfg.function_spec)
    knots = parse_knots(cfg.knots)
    if not knots:
        raise InputError("empty knot list")
    value = divided_difference(f, knots, cfg.cluster_tol)
    if not np.isfinite(value.real) or not np.isfinite(value.imag):
        raise ArithmeticError(f"divided difference is not finite: {value}")
    print(f"{_fmt(value.real)} {_fmt(value.imag)}")
    return EXIT_OK


# ---------------------------------------------------------------- compute-ssf

def _load_pair(cfg: RunConfig):
    if not cfg.h0_path or not cfg.v_path:
        raise InputError("--h0 and --v are required")
    H0, V = load_matrix(cfg.h0_path), load_matrix(cfg.v_path)
    if H0.shape != V.shape:
        raise HermitianError(f"H0 is {H0.shape[0]}x{H0.shape[0]} but V is {V.shape[0]}x{V.shape[0]}")
    return H0, V


def density_csv(density, grid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "eta_re", "eta_im"])
    vals = np.atleast_1d(density(grid))
    for t, v in zip(grid, vals):
        w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag) + 0.0)])
    return buf.getvalue()


def serialized_path(out) -> Path:
    """Where compute-ssf puts the density record next to the CSV."""
    return Path(out).with_suffix(".pp.json")


def cmd_compute_ssf(cfg: RunConfig) -> int:
    if not cfg.out:
        raise InputError("compute-ssf needs --out")
    H0, V = _load_pair(cfg)
    res = ssf_densities(H0, V, cfg.p, cfg.variant, cfg.cluster_tol)[-1]
    density = res.density.scaled(1.0 + cfg.corrupt_eta) if cfg.corrupt_eta else res.density
    c, d = res.hull
    if cfg.grid:
        grid = parse_grid(cfg.grid)
    else:
        pad = 0.05 * (d - c) + 1e-3
        grid = np.linspace(c - pad, d + pad, 201)
    if cfg.dump_measure:
        mu = build_m(decompose(H0, cfg.cluster_tol), V, cfg.p)
        _atomic_write(cfg.dump_measure, json.dumps(mu.to_records(), sort_keys=True) + "\n")
    _atomic_write(serialized_path(cfg.out), json.dumps(density.to_dict(), sort_keys=True) + "\n")
    _atomic_write(cfg.out, density_csv(density, grid))
    print(f"mass {_fmt(res.mass.real)} {_fmt(res.mass.imag)}")
    print(f"hull {_fmt(c)} {_fmt(d)}")
    return EXIT_OK


# ---------------------------------------------------------------- verify

def function_suite(p: int) -> list:
    """Default test functions for order ``p``: the families of the trace-formula sweep."""
    poly = ",".join(_fmt(c) for c in np.round(np.linspace(1.0, -0.5, p + 4), 6))
    return [f"poly:{poly}", "exp:1", "exp:-1", "exp:2", "exp:-2", "gauss:0,1",
            "rat:i", "rat:-i", "rat:2i", "rat:-2i"]


def trace_tolerance(family: str) -> float:
    return TRACE_TOL_EXACT if family in ("polynomial", "rational") else TRACE_TOL


def _record(p, spec, a, b, variant, check, tol, *, err=None, passed=None) -> dict:
    abs_err = abs(complex(a) - complex(b)) if err is None else err
    rel_err = abs_err / (1.0 + abs(complex(a)))
    if passed is None:
        passed = rel_err <= tol
    return {
        "p": p,
        "function_spec": spec,
        "trace_side": _cx(a),
        "integral_side": _cx(b),
        "abs_err": abs_err,
        "rel_err": rel_err,
        "variant": variant,
        "check": check,
        "passed": bool(passed),
    }


def _pair_checks(label, H0, V, p_max, cfg: RunConfig, specs) -> list:
    """Every check for one pair; records are ordered by (p, check, function)."""
    tol = cfg.cluster_tol
    D = decompose(H0, tol)
    dens = {v: ssf_densities(H0, V, p_max, v, tol) for v in VARIANTS}
    main = dens[cfg.variant]
    c, d = main[0].hull
    grid = np.linspace(c, d, GRID_POINTS)
    width = max(d - c, 1.0)
    outside = np.concatenate([np.linspace(c - 2 * width, c - 1e-9 * width, 50),
                              np.linspace(d + 1e-9 * width, d + 2 * width, 50)])
    vnorm = hs_norm(V)
    gauss = parse_function_spec("gauss:0,1")
    records = []
    for p in range(1, p_max + 1):
        eta = main[p - 1].density
        if cfg.corrupt_eta:
            eta = eta.scaled(1.0 + cfg.corrupt_eta)
        for spec in specs or function_suite(p):
            f = parse_function_spec(spec)
            r = trace_formula_check(H0, V, p, f, cfg.variant, density=eta, cluster_tol=tol)
            records.append(_record(p, spec, r["trace_side"], r["integral_side"], cfg.variant,
                                   f"{label}:trace_formula", trace_tolerance(f.family)))
        ref = trace_derivative(gauss, D, V, p, "m1_form")
        for method in METHODS[1:]:
            val = trace_derivative(gauss, D, V, p, method)
            t = FD_TOL if method == "finite_difference" else ALGEBRAIC_TOL
            records.append(_record(p, "gauss:0,1", ref, val, cfg.variant, f"{label}:method:{method}", t))
        ki = kernel_trace_identity(gauss, D, V, p)
        records.append(_record(p, "gauss:0,1", ki.lhs, ki.rhs_m1, cfg.variant, f"{label}:kernel:m1", KERNEL_TOL))
        records.append(_record(p, "gauss:0,1", ki.lhs, ki.rhs_m, cfg.variant, f"{label}:kernel:m", KERNEL_TOL))
        expected = complex(np.trace(np.linalg.matrix_power(V, p))) / math.factorial(p)
        mass = complex(main[p - 1].mass) * (1.0 + cfg.corrupt_eta)
        records.append(_record(p, None, expected, mass, cfg.variant, f"{label}:mass", MASS_TOL))
        ext = float(np.max(np.abs(eta(outside))))
        records.append(_record(p, None, 0.0, ext, cfg.variant, f"{label}:support", SUPPORT_TOL))
        if p >= 2:
            diff = np.abs(dens["nup1"][p - 1].density(grid) - dens["nup2"][p - 1].density(grid))
            k = int(np.argmax(diff))
            records.append(_record(p, None, dens["nup1"][p - 1].density(grid[k]),
                                   dens["nup2"][p - 1].density(grid[k]), "nup1/nup2",
                                   f"{label}:variant_agreement", VARIANT_TOL))
            tv = total_variation(build_m(D, V, p))
            bound = vnorm**p
            records.append(_record(p, None, bound, tv, cfg.variant, f"{label}:variation", 0.0,
                                   err=max(0.0, tv - bound), passed=tv <= bound + 1e-9))
        if H0.shape[0] == 1:
            a, v = float(H0[0, 0].real), float(V[0, 0].real)
            lo, hi = sorted((a, a + v))
            inner = np.linspace(lo, hi, 52)[1:-1]
            sign = 1.0 if v > 0 else -1.0
            closed = sign * (a + v - inner) ** (p - 1) / math.factorial(p - 1)
            err = float(np.max(np.abs(eta(inner) - closed))) if v else float(np.max(np.abs(eta(inner))))
            records.append(_record(p, None, 0.0, err, cfg.variant, f"{label}:closed_form",
                                   CLOSED_FORM_TOL, err=err))
    return records


def _verify_pairs(cfg: RunConfig) -> list:
    if cfg.h0_path or cfg.v_path:
        return [("pair0", *_load_pair(cfg))]
    rng = np.random.default_rng(cfg.seed)
    pairs = []
    for k in range(cfg.count):
        n = cfg.n if cfg.n is not None else 2 + k % 5
        pairs.append((f"seed{cfg.seed}.pair{k}", *random_pair(rng, n)))
    return pairs


def run_verify(cfg: RunConfig) -> list:
    pairs = _verify_pairs(cfg)
    specs = [cfg.function_spec] if cfg.function_spec else None
    if specs:
        parse_function_spec(specs[0])
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        chunks = pool.map(lambda item: _pair_checks(item[0], item[1], item[2], cfg.p, cfg, specs), pairs)
        return [rec for chunk in chunks for rec in chunk]


def report_text(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def cmd_verify(cfg: RunConfig) -> int:
    records = run_verify(cfg)
    text = report_text(records)
    if cfg.out:
        _atomic_write(cfg.out, text)
    else:
        sys.stdout.write(text)
    failed = [r for r in records if not r["passed"]]
    if failed:
        print(f"verify: {len(failed)} of {len(records)} checks failed; first: "
              f"{json.dumps(failed[0], sort_keys=True)}", file=sys.stderr)
        return EXIT_FAILED
    print(f"verify: all {len(records)} checks passed", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- report

def load_report(path) -> list:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{path}:{lineno}: not a JSON record ({exc})") from exc
            if not isinstance(rec, dict) or "passed" not in rec:
                raise InputError(f"{path}:{lineno}: record lacks a 'passed' field")
            records.append(rec)
    return records


def summarize(records) -> dict:
    """Per check kind: record count, failures and worst relative error."""
    out: dict = {}
    for r in records:
        kind = r.get("check", "trace_formula").split(":", 1)[-1]
        s = out.setdefault(kind, {"count": 0, "failed": 0, "worst_rel_err": 0.0})
        s["count"] += 1
        s["failed"] += 0 if r["passed"] else 1
        s["worst_rel_err"] = max(s["worst_rel_err"], float(r.get("rel_err", 0.0)))
    return out


def cmd_report(cfg: RunConfig) -> int:
    path = cfg.report_path or cfg.out
    if not path:
        raise InputError("report needs a report file")
    try:
        records = load_report(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    summary = summarize(records)
    for kind in sorted(summary):
        s = summary[kind]
        print(f"{kind:32s} {s['count']:6d} checks {s['failed']:4d} failed  worst rel_err {s['worst_rel_err']:.3e}")
    failed = sum(s["failed"] for s in summary.values())
    print(f"total {len(records)} records, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


# ---------------------------------------------------------------- entry point

COMMANDS = {"dd": cmd_dd, "compute-ssf": cmd_compute_ssf, "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectralshift",
                                     description="Divided differences, multiple operator integrals "
                                                 "and higher-order spectral shift densities.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--cluster-tol", type=float, default=None, help="eigenvalue/knot merging tolerance")

    sp = sub.add_parser("dd", help="divided difference of a function at knots")
    sp.add_argument("--f", dest="function_spec", required=True, help="function spec, e.g. poly:0,0,1")
    sp.add_argument("--knots", required=True, help="comma-separated knots")
    common(sp)

    def pair_args(sp, required):
        sp.add_argument("--h0", dest="h0_path", required=required, help="JSON matrix file for H0")
        sp.add_argument("--v", dest="v_path", required=required, help="JSON matrix file for V")
        sp.add_argument("--variant", choices=VARIANTS, default="nup1", help="recursion variant (default nup1)")
        sp.add_argument("--corrupt-eta", type=float, default=0.0,
                        help="debug: scale the density by (1 + x) before output/checks")

    sp = sub.add_parser("compute-ssf", help="spectral shift density of order p")
    pair_args(sp, True)
    sp.add_argument("--p", type=int, default=1, help="order of the density (default 1)")
    sp.add_argument("--grid", help="a:b:m sample grid (default: padded spectral hull, 201 points)")
    sp.add_argument("--out", required=True, help="CSV output; the density record goes to <out>.pp.json")
    sp.add_argument("--dump-measure", help="also write the order-p measure m as JSON records")
    common(sp)

    sp = sub.add_parser("verify", help="run the property suite on a pair or seeded random pairs")
    pair_args(sp, False)
    sp.add_argument("--p", type=int, default=4, help="highest order checked")
    sp.add_argument("--f", dest="function_spec", help="check only this function (default: full suite)")
    sp.add_argument("--seed", type=int, default=0, help="seed for the random pairs")
    sp.add_argument("--count", type=int, default=5, help="number of random pairs")
    sp.add_argument("--n", type=int, default=None, help="dimension of random pairs (default cycles 2..6)")
    sp.add_argument("--workers", type=int, default=1, help="threads; the output order does not depend on it")
    sp.add_argument("--out", help="report file (line-delimited JSON); stdout if omitted")
    common(sp)

    sp = sub.add_parser("report", help="summarize a verify report; exit 0 iff every record passed")
    sp.add_argument("report_path", help="report produced by verify --out")
    return parser


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in vars(ns).items() if k in fields})


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = config_from_args(ns)
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            return COMMANDS[cfg.command](cfg)
    except EnvelopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENVELOPE
    except (InputError, FunctionSpecError, HermitianError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, RuntimeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
