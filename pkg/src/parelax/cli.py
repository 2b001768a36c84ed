"""Batch front-end: approximations, count tables, model emission, plot data.

Exit codes: 0 success, 2 verification failure, 3 computation error,
4 problem parse/reformulation error (argparse uses its usual status 2 for
bad usage).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import multiprocessing
import re
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import emit, expr, lut, para, pwl
from .errors import (DomainViolation, ParelaxError, ParseError,
                     UnsupportedOperation)
from .functions import Interval, UnivariateFunction, constant

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_COMPUTE = 3
EXIT_PARSE = 4

EPS_LADDER = (1.0, 0.1, 0.01, 0.001)

# Function-domain combinations used by the count tables (label pairs).
TABLE_DOMAINS = {
    "sin": (("-pi/2", "pi/2"), ("pi/2", "3pi/2"), ("-pi/2", "3pi/2"),
            ("0", "pi"), ("pi", "2pi"), ("0", "2pi")),
    "exp": (("-5", "-2"), ("-2", "2"), ("-5", "2"),
            ("2", "5"), ("-2", "5"), ("-5", "5")),
}

_DOMAIN_TOKEN = re.compile(
    r"^(?P<sign>[+-]?)(?P<coef>\d+(?:\.\d+)?)?"
    r"(?P<sym>pi|e(?:\^(?P<pow>-?\d+))?)?(?:/(?P<div>\d+(?:\.\d+)?))?$")


def parse_scalar(token: str) -> float:
    """Numeric literal with pi/e support: '3pi/2', 'e^-4', '-pi/2', '0.25'."""
    token = token.strip()
    try:
        return float(token)
    except ValueError:
        pass
    m = _DOMAIN_TOKEN.match(token)
    if not m or (m.group("coef") is None and m.group("sym") is None):
        raise ValueError(f"cannot parse domain literal {token!r}")
    value = float(m.group("coef")) if m.group("coef") else 1.0
    if m.group("sym") == "pi":
        value *= math.pi
    elif m.group("sym"):
        value *= math.e ** (int(m.group("pow")) if m.group("pow") else 1)
    if m.group("div"):
        value /= float(m.group("div"))
    return -value if m.group("sign") == "-" else value


def parse_domain(text: str) -> Interval:
    lo_text, _, hi_text = text.partition(":")
    if not _:
        raise ValueError(f"domain must be 'lo:hi', got {text!r}")
    return Interval(parse_scalar(lo_text), parse_scalar(hi_text))


def parse_function(spec: str) -> UnivariateFunction:
    if spec == "const0":
        return constant(0.0)
    if spec in ("sin", "cos", "exp", "ln"):
        return UnivariateFunction(spec)
    raise ValueError(f"unknown function {spec!r} (sin, cos, exp, ln, const0)")


@dataclass
class JobSpec:
    command: str
    function: dict | None
    domain: list | None
    eps_list: list
    lam: float
    side: str
    out: str | None
    cache: str | None
    samples: int
    seed: int

    def to_json(self) -> dict:
        return asdict(self)


def _normalize_side(side: str) -> str:
    return {"below": "under", "above": "over"}.get(side, side)


# ---------------------------------------------------------------------------
# approx
# ---------------------------------------------------------------------------


def _pwl_verification(approx: pwl.PwlApproximation, samples: int) -> dict:
    """Sampled relaxation-sandwich check plus the certified interpolation error."""
    dom = approx.domain
    xs = np.linspace(dom.lo, dom.hi, samples)
    fv = approx.function.evaluate(xs)
    env = pwl.evaluate_envelope(approx, xs)
    slack = 1e-9 * (1.0 + np.abs(fv))
    band = 2.0 * approx.shift if approx.shift > 0 else approx.epsilon
    below = float(np.max(env - fv)) if approx.shift > 0 \
        else float(np.max(np.abs(env - fv)) - approx.epsilon)
    above = float(np.max(fv - band - env))
    certified = pwl.max_error(approx.function, approx)
    passed = bool(np.all(env - fv <= slack)
                  and np.all(fv - band - env <= slack)
                  and certified <= approx.epsilon + 1e-9)
    return {
        "samples": samples,
        "envelope_excess": below,
        "gap_violation": above,
        "certified_max_error": certified,
        "passed": passed,
    }


def cmd_approx(args) -> int:
    job = JobSpec(
        command=f"approx-{args.technique}",
        function=parse_function(args.fn).to_json(),
        domain=parse_domain(args.domain).to_json(),
        eps_list=[float(e) for e in args.eps],
        lam=args.lam,
        side=_normalize_side(args.side),
        out=args.out,
        cache=args.cache,
        samples=args.samples,
        seed=args.seed,
    )
    fn = UnivariateFunction.from_json(job.function)
    domain = Interval.from_json(job.domain)
    if len(job.eps_list) > 1 and job.out and not args.out_is_dir:
        print("multiple --eps values need --out-dir", file=sys.stderr)
        return EXIT_COMPUTE

    artifacts = []
    for eps in job.eps_list:
        try:
            if args.technique == "para":
                if job.cache:
                    table = lut.LookupTable(job.cache)
                    approx = lut.approximate_function(fn, domain, eps, job.side,
                                                      job.lam, table)
                    table.save(job.cache)
                else:
                    approx = para.outer_loop(fn, domain, eps, lam=job.lam,
                                             side=job.side)
                report = para.report_to_json(para.verify(approx, fn,
                                                         samples=job.samples))
                payload = approx.to_json()
                pieces = approx.K
            else:
                approx = pwl.relax_shift(fn, domain, eps)
                report = _pwl_verification(approx, job.samples)
                payload = approx.to_json()
                pieces = approx.K
        except ParelaxError as exc:
            print(f"computation failed for eps={eps}: {exc}", file=sys.stderr)
            return EXIT_COMPUTE
        if not report["passed"]:
            print(f"verification FAILED for eps={eps}", file=sys.stderr)
            return EXIT_VERIFY
        artifacts.append({"job": {**job.to_json(), "eps_list": [eps]},
                          "approximation": payload,
                          "verification": report})
        print(f"{args.technique} {args.fn} [{domain.lo:.6g}, {domain.hi:.6g}] "
              f"eps={eps}: {pieces} pieces, verification PASS")

    if job.out:
        if args.out_is_dir:
            import os
            os.makedirs(job.out, exist_ok=True)
            for artifact in artifacts:
                eps = artifact["job"]["eps_list"][0]
                path = f"{job.out}/{args.technique}_{args.fn}_{eps:g}.json"
                _write_json(path, artifact)
        else:
            _write_json(job.out, artifacts[0] if len(artifacts) == 1 else artifacts)
    return EXIT_OK


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


# ---------------------------------------------------------------------------
# count-table
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    function: str
    domain_label: str
    lo: float
    hi: float
    epsilon: float
    side: str
    pieces: int
    verified: bool
    error: str
    approximation: para.ParaApproximation | None = None


def _compute_cell(cell) -> CellResult:
    kind, lo_label, hi_label, eps, side, lam, samples = cell
    lo, hi = parse_scalar(lo_label), parse_scalar(hi_label)
    label = f"{lo_label}:{hi_label}"
    try:
        approx = para.outer_loop(UnivariateFunction(kind), Interval(lo, hi),
                                 eps, lam=lam, side=side)
        report = para.verify(approx, samples=samples)
        return CellResult(kind, label, lo, hi, eps, side, approx.K,
                          report.passed, "", approx)
    except ParelaxError as exc:
        return CellResult(kind, label, lo, hi, eps, side, -1, False, str(exc))


def count_table_cells(kind: str, eps_list=EPS_LADDER, lam: float = para.DEFAULT_LAMBDA,
                      jobs: int = 1, samples: int = 10000) -> list:
    """Compute every (domain, eps, side) cell of the count table for one kind."""
    cells = [
        (kind, lo, hi, eps, side, lam, samples)
        for lo, hi in TABLE_DOMAINS[kind]
        for eps in eps_list
        for side in ("over", "under")  # CSV lists the above rows before the below rows
    ]
    if jobs > 1:
        with multiprocessing.Pool(jobs) as pool:
            results = pool.map(_compute_cell, cells)
    else:
        results = [_compute_cell(cell) for cell in cells]
    return results


def write_count_csv(results: list, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["function", "domain", "lo", "hi", "epsilon", "side",
                         "pieces", "verified", "error"])
        for r in results:
            side_label = "above" if r.side == "over" else "below"
            writer.writerow([r.function, r.domain_label, repr(r.lo), repr(r.hi),
                             repr(r.epsilon), side_label, r.pieces,
                             int(r.verified), r.error])


def cmd_count_table(args) -> int:
    eps_list = [float(e) for e in args.eps]
    results = count_table_cells(args.fn, eps_list, args.lam, args.jobs,
                                args.samples)
    write_count_csv(results, args.out)
    bad = [r for r in results if not r.verified]
    for r in results:
        side_label = "above" if r.side == "over" else "below"
        status = "PASS" if r.verified else f"FAIL {r.error}"
        print(f"{r.function} [{r.domain_label}] eps={r.epsilon:g} {side_label}: "
              f"{r.pieces} pieces {status}")
    if bad:
        return EXIT_VERIFY
    return EXIT_OK


# ---------------------------------------------------------------------------
# relax
# ---------------------------------------------------------------------------


def build_relaxations(problem: expr.FactoredProblem, technique: str, eps: float,
                      lam: float, cache: str | None):
    """Per-constraint approximations for a factored problem.

    PARA: one approximation per univariate constraint, side by direction,
    look-up-table assisted when a cache path is given.  PWL: one shifted
    relaxation per (x, y, function) block, shared by equality pairs.
    """
    if technique == "para":
        table = lut.LookupTable(cache) if cache else None
        out = {}
        for j, uc in enumerate(problem.univariate):
            side = "under" if uc.sense == "LE" else "over"
            out[j] = lut.approximate_function(uc.function, uc.domain, eps,
                                              side, lam, table)
        if table is not None and cache:
            table.save(cache)
        return out
    blocks: dict = {}
    out = {}
    for j, uc in enumerate(problem.univariate):
        key = (uc.x_index, uc.y_index, uc.function)
        if key not in blocks:
            blocks[key] = pwl.relax_shift(uc.function, uc.domain, eps)
        out[j] = blocks[key]
    return out


def cmd_relax(args) -> int:
    try:
        with open(args.problem, "r", encoding="utf-8") as handle:
            envelope = json.load(handle)
        problem = expr.problem_from_envelope(envelope)
    except (ParseError, UnsupportedOperation, DomainViolation, KeyError,
            json.JSONDecodeError) as exc:
        print(f"problem parsing/reformulation failed: {exc}", file=sys.stderr)
        return EXIT_PARSE

    eps = args.eps[0] if isinstance(args.eps, list) else args.eps
    try:
        relaxations = build_relaxations(problem, args.technique, float(eps),
                                        args.lam, args.cache)
    except ParelaxError as exc:
        print(f"approximation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    for j, uc in enumerate(problem.univariate):
        approx = relaxations[j]
        if isinstance(approx, para.ParaApproximation):
            if not para.verify(approx, samples=args.samples).passed:
                print(f"verification failed on univariate[{j}]", file=sys.stderr)
                return EXIT_VERIFY
        else:
            if not _pwl_verification(approx, args.samples)["passed"]:
                print(f"verification failed on univariate[{j}]", file=sys.stderr)
                return EXIT_VERIFY

    if args.technique == "para":
        model = emit.emit_para(problem, relaxations)
    else:
        model = emit.emit_pwl(problem, relaxations)

    with open(args.out_base + ".lp", "w", encoding="utf-8") as handle:
        handle.write(emit.write_model(model, "lp-text"))
    with open(args.out_base + ".json", "w", encoding="utf-8") as handle:
        handle.write(emit.write_model(model, "json"))

    base_vars = problem.n
    base_rows = len(problem.linear_rows) + len(problem.quadratic_rows)
    d_vars = len(model.variables) - base_vars
    d_rows = len(model.rows) - base_rows
    n_bin = model.n_binary()
    print(f"variables: {base_vars} -> {len(model.variables)} (+{d_vars}, "
          f"{n_bin} binary)")
    print(f"rows: {base_rows} -> {len(model.rows)} (+{d_rows})")
    print(f"wrote {args.out_base}.lp and {args.out_base}.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# plot-data
# ---------------------------------------------------------------------------


def _load_approximation(path: str):
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    if "approximation" in data:
        data = data["approximation"]
    if "pieces" in data:
        return para.ParaApproximation.from_json(data)
    return pwl.PwlApproximation.from_json(data)


def cmd_plot_data(args) -> int:
    approx = _load_approximation(args.approximation)
    fn = approx.function
    dom = approx.domain
    xs = np.linspace(dom.lo, dom.hi, args.samples + 1)
    fv = fn.evaluate(xs)

    if isinstance(approx, para.ParaApproximation):
        piece_cols = [pc.parabola.evaluate(xs) for pc in approx.pieces]
        env = approx.envelope(xs)
        in_piece = [np.ones_like(xs, dtype=bool) for _ in approx.pieces]
    else:
        env = pwl.evaluate_envelope(approx, xs)
        piece_cols = []
        in_piece = []
        for k in range(approx.K):
            lo, hi = approx.breakpoints[k], approx.breakpoints[k + 1]
            mask = (xs >= lo) & (xs <= hi)
            piece_cols.append(env)
            in_piece.append(mask)

    with open(args.out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "f", "envelope"]
                        + [f"piece_{k + 1}" for k in range(len(piece_cols))])
        for i, x in enumerate(xs):
            row = [repr(float(x)), repr(float(fv[i])), repr(float(env[i]))]
            for col, mask in zip(piece_cols, in_piece):
                row.append(repr(float(col[i])) if mask[i] else "")
            writer.writerow(row)
    print(f"wrote {args.out} ({len(xs)} rows)")

    if args.fig:
        render_figure(approx, xs, fv, env, piece_cols, in_piece, args.fig)
        print(f"wrote {args.fig}")
    return EXIT_OK


def render_figure(approx, xs, fv, env, piece_cols, in_piece, path: str) -> None:
    """Render function, envelope, and pieces to an image file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "parelax"
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    for col, mask in zip(piece_cols, in_piece):
        ax.plot(xs[mask], np.asarray(col)[mask], color="0.75", lw=0.8)
    ax.plot(xs, fv, color="C0", lw=1.6, label="f")
    ax.plot(xs, env, color="C3", lw=1.2, label="envelope")
    lo = float(np.min(fv))
    hi = float(np.max(fv))
    pad = 0.35 * (hi - lo + 1e-9)
    ax.set_ylim(lo - pad, hi + pad)
    ax.legend(loc="best", frameon=False)
    ax.set_xlabel("x")
    fig.tight_layout()
    metadata = {"Date": None} if path.endswith(".svg") else {}
    fig.savefig(path, metadata=metadata)
    plt.close(fig)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parelax",
        description="Parabolic and piecewise-linear relaxations of univariate constraints")
    sub = parser.add_subparsers(dest="command", required=True)

    ap = sub.add_parser("approx", help="compute one approximation")
    ap.add_argument("technique", choices=("para", "pwl"))
    ap.add_argument("--fn", required=True, help="sin|cos|exp|ln|const0")
    ap.add_argument("--domain", required=True, help="lo:hi, pi/e literals allowed")
    ap.add_argument("--eps", action="append", required=True, type=float)
    ap.add_argument("--lam", type=float, default=para.DEFAULT_LAMBDA)
    ap.add_argument("--side", default="under",
                    choices=("under", "over", "below", "above"))
    ap.add_argument("--out", default=None, help="artifact path (JSON)")
    ap.add_argument("--out-dir", dest="out_is_dir", action="store_true",
                    help="treat --out as a directory (one file per eps)")
    ap.add_argument("--cache", default=None, help="look-up-table path")
    ap.add_argument("--samples", type=int, default=10000)
    ap.add_argument("--seed", type=int, default=0)
    ap.set_defaults(func=cmd_approx)

    ct = sub.add_parser("count-table", help="piece counts over the standard domains")
    ct.add_argument("--fn", required=True, choices=tuple(TABLE_DOMAINS))
    ct.add_argument("--eps", action="append", type=float, default=None)
    ct.add_argument("--lam", type=float, default=para.DEFAULT_LAMBDA)
    ct.add_argument("--out", required=True, help="CSV output path")
    ct.add_argument("--jobs", type=int, default=1)
    ct.add_argument("--samples", type=int, default=10000)
    ct.set_defaults(func=cmd_count_table)

    rx = sub.add_parser("relax", help="emit a relaxed model for a problem file")
    rx.add_argument("problem", help="problem envelope (JSON)")
    rx.add_argument("--technique", required=True, choices=("para", "pwl"))
    rx.add_argument("--eps", type=float, required=True)
    rx.add_argument("--lam", type=float, default=para.DEFAULT_LAMBDA)
    rx.add_argument("--cache", default=None)
    rx.add_argument("--samples", type=int, default=10000)
    rx.add_argument("--out-base", required=True,
                    help="output path prefix for .lp and .json")
    rx.set_defaults(func=cmd_relax)

    pd = sub.add_parser("plot-data", help="CSV samples and a rendered figure")
    pd.add_argument("approximation", help="approximation artifact (JSON)")
    pd.add_argument("--samples", type=int, default=400)
    pd.add_argument("--out", required=True, help="CSV output path")
    pd.add_argument("--fig", default=None, help="figure path (.svg or .png)")
    pd.set_defaults(func=cmd_plot_data)
    return parser


def _validate(args, parser) -> None:
    eps_values = getattr(args, "eps", None)
    if eps_values is None and args.command == "count-table":
        args.eps = list(EPS_LADDER)
        eps_values = args.eps
    if isinstance(eps_values, list):
        values = eps_values
    elif eps_values is None:
        values = []
    else:
        values = [eps_values]
    if any(e <= 0 for e in values):
        parser.error("eps must be positive")
    lam = getattr(args, "lam", None)
    if lam is not None and not (0.0 < lam < 1.0):
        parser.error("lam must lie strictly inside (0, 1)")


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    _validate(args, parser)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
