"""Command-line front end.

Subcommands:
  rate-fn      rate-function curves (error-exponent sweep at a fixed type,
               or a binary type sweep at a fixed error exponent)
  excess-rate  excess-rate exponent bounds over a rate grid
  simulate     finite-blocklength random-binning simulation
  oracle       brute-force grid reference values

Exit codes: 1 bad input, 2 solver failure, 3 size guard tripped.
All quantities are nats unless --bits is given, which converts every
numeric output column by ln 2.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import binning, grid_oracle
from .errors import NotConverged, SwexpError, TooLarge, ValidationError
from .excess_rate import (
    average_rate_comparison,
    excess_rate_lower,
    excess_rate_upper,
    fixed_rate_comparison,
)
from .probability import Pmf, Source, backward_cond_entropy, entropy, load_source
from .rate_functions import breakpoints, rho_curve, rho_ex, rho_rb, rho_sp, rho_ub
from .solvers import DEFAULT_CONFIG, e_ex, e_rb, v_ex, v_rb

LN2 = math.log(2.0)


def _workers() -> int:
    raw = os.environ.get("SWEXP_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    """Map with a deterministic, index-ordered result regardless of the
    worker count."""
    items = list(items)
    n_workers = min(_workers(), max(len(items), 1))
    if n_workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, items))


def _fmt(value, bits: bool) -> str:
    if isinstance(value, float) and math.isfinite(value) and bits:
        value = value / LN2
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _parse_grid(spec: str) -> np.ndarray:
    try:
        a, b, step = (float(tok) for tok in spec.split(":"))
    except ValueError:
        raise ValidationError("grid", f"expected A:B:STEP, got {spec!r}") from None
    if step <= 0 or b < a:
        raise ValidationError("grid", "need step > 0 and B >= A")
    count = int(round((b - a) / step)) + 1
    grid = a + step * np.arange(count)
    return grid[grid <= b + 1e-12]


def _parse_qx(spec: str, size: int) -> np.ndarray:
    try:
        vals = np.array([float(tok) for tok in spec.split(",")], dtype=float)
    except ValueError:
        raise ValidationError("qx", f"not a comma-separated number list: {spec!r}") from None
    if vals.size != size:
        raise ValidationError("qx", f"expected {size} entries, got {vals.size}")
    try:
        Pmf(vals)
    except ValueError as exc:
        raise ValidationError("qx", str(exc)) from None
    return vals


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w"), True


def _emit(text: str, path):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def cmd_rate_fn(args) -> int:
    src = load_source(args.source)
    bits = args.bits
    lines = []
    if args.ee_grid is not None:
        if args.qx is None:
            raise ValidationError("qx", "--qx is required with --ee-grid")
        qx = _parse_qx(args.qx, src.x_size)
        grid = _parse_grid(args.ee_grid)
        points = rho_curve(src, qx, grid)
        lines.append("ee,rho_rb,rho_ex,rho_sp,rho_ub")
        for p in points:
            lines.append(",".join(_fmt(v, bits) for v in
                                  (p.ee, p.rho_rb, p.rho_ex, p.rho_sp, p.rho_ub)))
    else:
        if args.ee is None:
            raise ValidationError("ee", "need --ee (type sweep) or --ee-grid (exponent sweep)")
        if src.x_size != 2:
            raise ValidationError("source", "the type sweep needs a binary source alphabet")
        res = args.resolution

        def one(k):
            qx = np.array([k / res, 1.0 - k / res])
            bps = breakpoints(src, qx)
            rb = rho_rb(src, qx, args.ee, bps=bps)
            ex = rho_ex(src, qx, args.ee, bps=bps)
            sp = rho_sp(src, qx, args.ee, bps=bps)
            return (k / res, rb, ex, sp, min(rb, ex), entropy(qx),
                    backward_cond_entropy(qx, src.pygx))

        rows = parallel_map(one, range(res + 1))
        lines.append("qx0,rho_rb,rho_ex,rho_sp,rho_ub,h_qx,h_x_given_y")
        for row in rows:
            lines.append(",".join(_fmt(v, bits) for v in row))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_excess_rate(args) -> int:
    src = load_source(args.source)
    if args.ee is None or args.r_grid is None:
        raise ValidationError("args", "--ee and --r-grid are required")
    grid = _parse_grid(args.r_grid)
    r0, peak_qx, fixed_curve = fixed_rate_comparison(src, args.ee, grid,
                                                     grid_res=args.resolution)
    avg_curve = average_rate_comparison(src, args.ee, grid, grid_res=args.resolution)

    def one(r):
        return (float(r), excess_rate_lower(src, float(r), args.ee),
                excess_rate_upper(src, float(r), args.ee))

    rows = parallel_map(one, grid)
    if args.format == "json":
        payload = {
            "ee": args.ee,
            "r0": r0 / LN2 if args.bits else r0,
            "peak_type": list(peak_qx),
            "peak_rate": r0 / LN2 if args.bits else r0,
            "points": [
                {"r": _num(r, args.bits), "er_lower": _num(lo, args.bits),
                 "er_upper": _num(hi, args.bits)}
                for r, lo, hi in rows
            ],
        }
        _emit(json.dumps(payload, indent=2, allow_nan=True) + "\n", args.out)
        return 0
    lines = ["r,er_lower,er_upper,fixed_rate_er,avg_rate_er"]
    for (r, lo, hi), fx, av in zip(rows, fixed_curve, avg_curve):
        lines.append(",".join(_fmt(v, args.bits) for v in (r, lo, hi, fx, av)))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _num(v: float, bits: bool):
    if math.isinf(v):
        return "inf"
    return v / LN2 if bits else v


def cmd_simulate(args) -> int:
    src = load_source(args.source)
    if args.trials < 1:
        raise ValidationError("trials", "must be a positive integer")
    if args.n < 1:
        raise ValidationError("n", "must be a positive integer")
    ee = args.ee if args.ee is not None else 0.05

    def rate_fn(t):
        return rho_ub(src, t.pmf(), ee)

    code = binning.build_code(src, args.n, rate_fn, args.seed)
    decoders = [args.decoder] if args.decoder else ["ml", "mce"]
    results = []
    for dec in decoders:
        stats = binning.estimate_error(src, code, dec, args.trials, args.seed)
        results.append({
            "n": args.n,
            "decoder": dec,
            "trials": stats.trials,
            "errors": stats.errors,
            "p_hat": stats.p_hat,
            "ci95": stats.ci95,
            "rate_summary": {
                "ee": ee,
                "min_rate": _num(float(code.rates.min()), args.bits),
                "max_rate": _num(float(code.rates.max()), args.bits),
                "max_header_rate": _num(max(code.header_rate(i)
                                            for i in range(len(code.types))), args.bits),
            },
            "seed": args.seed,
        })
    payload = results[0] if len(results) == 1 else results
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def cmd_oracle(args) -> int:
    src = load_source(args.source)
    gs = grid_oracle.GridSpec(resolution=args.resolution,
                              max_points=args.max_points)
    qx = _parse_qx(args.qx, src.x_size) if args.qx else src.px.probs
    op = args.op
    if op == "v_rb":
        value = grid_oracle.grid_v_rb(src, qx, args.ee, args.eta, gs)
        params = {"qx": list(qx), "ee": args.ee, "eta": args.eta}
    elif op == "v_ex":
        value = grid_oracle.grid_v_ex(src, qx, args.ee, gs)
        params = {"qx": list(qx), "ee": args.ee}
    elif op == "e_rb":
        value = grid_oracle.grid_e_rb(src, args.r, args.er, args.t, gs)
        params = {"r": args.r, "er": args.er, "t": args.t}
    elif op == "e_ex":
        value = grid_oracle.grid_e_ex(src, args.r, args.er, args.t, gs)
        params = {"r": args.r, "er": args.er, "t": args.t}
    elif op == "error_exponent":
        rho = [rho_ub(src, np.array([k / gs.resolution, 1 - k / gs.resolution]), args.ee)
               for k in range(gs.resolution + 1)]
        value = grid_oracle.grid_error_exponent_rb(src, np.asarray(rho), gs)
        params = {"ee": args.ee, "rate_fn": "rho_ub"}
    elif op == "bundle":
        return _oracle_bundle(src, qx, gs, args)
    else:
        raise ValidationError("op", f"unknown oracle op {op!r}")
    payload = {"op": op, "resolution": gs.resolution, "params": params,
               "value": _num(value, args.bits)}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def _oracle_bundle(src: Source, qx: np.ndarray, gs: grid_oracle.GridSpec, args) -> int:
    """Reference values for the bundled evaluation points, regenerable in one
    command."""
    ee = args.ee if args.ee is not None else 0.05
    entries = {
        "v_rb": grid_oracle.grid_v_rb(src, qx, ee, 1.0, gs),
        "v_rb_alg": v_rb(src, qx, ee, 1.0).value,
        "v_ex": grid_oracle.grid_v_ex(src, qx, max(4 * ee, ee), gs),
        "v_ex_alg": v_ex(src, qx, max(4 * ee, ee)).value,
        "e_rb": grid_oracle.grid_e_rb(src, args.r or 0.39, args.er or 0.002,
                                      args.t or 0.5, gs),
        "e_rb_alg": e_rb(src, args.r or 0.39, args.er or 0.002, args.t or 0.5).value,
        "e_ex": grid_oracle.grid_e_ex(src, args.r or 0.39, args.er or 0.002,
                                      max(args.t or 1.5, 1.0), gs),
        "e_ex_alg": e_ex(src, args.r or 0.39, args.er or 0.002,
                         max(args.t or 1.5, 1.0)).value,
    }
    payload = {"op": "bundle", "resolution": gs.resolution,
               "qx": list(qx), "ee": ee,
               "values": {k: _num(v, args.bits) for k, v in entries.items()}}
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swexp", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--source", required=True, help="source JSON path")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--bits", action="store_true",
                       help="report rates/exponents in bits instead of nats")

    p = sub.add_parser("rate-fn", help="rate-function curves")
    common(p)
    p.add_argument("--qx", default=None, help="evaluation type, comma-separated")
    p.add_argument("--ee", type=float, default=None)
    p.add_argument("--ee-grid", default=None, metavar="A:B:STEP")
    p.add_argument("--resolution", type=int, default=100)
    p.set_defaults(fn=cmd_rate_fn)

    p = sub.add_parser("excess-rate", help="excess-rate exponent bounds")
    common(p)
    p.add_argument("--ee", type=float, default=None)
    p.add_argument("--r-grid", default=None, metavar="A:B:STEP")
    p.add_argument("--resolution", type=int, default=400)
    p.set_defaults(fn=cmd_excess_rate)

    p = sub.add_parser("simulate", help="random-binning simulation")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ee", type=float, default=None,
                   help="error-exponent target for the rate function (default 0.05)")
    p.add_argument("--decoder", choices=("ml", "mce"), default=None,
                   help="default: simulate both")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("oracle", help="grid-oracle reference values")
    common(p)
    p.add_argument("--op", required=True,
                   choices=("v_rb", "v_ex", "e_rb", "e_ex", "error_exponent", "bundle"))
    p.add_argument("--qx", default=None)
    p.add_argument("--ee", type=float, default=None)
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--er", type=float, default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--max-points", type=int, default=50_000_000)
    p.set_defaults(fn=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TooLarge as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NotConverged as exc:
        delta = getattr(exc, "delta", math.inf)
        if exc.result is not None and delta < 100 * DEFAULT_CONFIG.obj_tol:
            print(f"warning: {exc}; emitting best value found", file=sys.stderr)
            _emit(json.dumps({"value": exc.result.value, "converged": False}) + "\n",
                  getattr(args, "out", None))
            return 0
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SwexpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
