"""Achievability and converse tests for (rate, excess-rate-exponent) pairs,
line-search computation of the excess-rate exponent bounds, and the
fixed-rate / average-rate comparison curves.

A pair (r, er) at target error exponent ee is certified achievable when the
concave trade-off functions, maximized over their multiplier ranges, reach
ee; it is ruled out when the sphere-packing trade-off stays below ee. Both
conditions are monotone in er, so the optimal excess-rate exponent at a
given rate is the flip point of the condition, found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .probability import Pmf, Source, entropy, kl_divergence
from .rate_functions import breakpoints, rho_ex, rho_rb, rho_sp, rho_ub
from .solvers import DEFAULT_CONFIG, SolverConfig, e_ex, e_rb

T_MAX = 64.0
LINE_SEARCH_TOL = 1e-5
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ExcessRatePoint:
    r: float
    er_lower: float
    er_upper: float
    achievable_flag: bool
    converse_flag: bool


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def golden_max(f, lo: float, hi: float, tol: float = 1e-5,
               early_above: float | None = None) -> tuple:
    """Maximum of a concave scalar function by golden-section search.

    Returns (argmax, max). Concavity makes the restriction to a unimodal
    bracket valid. When ``early_above`` is given, the search returns as soon
    as any evaluation reaches it (for threshold tests that only need the
    verdict, not the maximum).
    """
    a, b = float(lo), float(hi)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if early_above is not None and max(fc, fd) >= early_above:
            return (c, fc) if fc >= fd else (d, fd)
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
        else:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
    x = 0.5 * (a + b)
    return x, f(x)


def bracketed_concave_max(f, lo: float, hi: float, tol: float = 1e-5,
                          early_above: float | None = None) -> tuple:
    """Maximum of a concave function on [lo, hi]: a geometric probe walks out
    from lo until the function turns down (cheap when the maximizer is
    small), then golden-section refines inside the bracketing triple."""
    a, b = float(lo), float(hi)
    xs = [a]
    step = max(tol, 0.25)
    x = a + step
    while x < b:
        xs.append(x)
        x = a + (x - a) * 2.0
    xs.append(b)
    best_x, best_v = a, f(a)
    if early_above is not None and best_v >= early_above:
        return best_x, best_v
    for i in range(1, len(xs)):
        v = f(xs[i])
        if early_above is not None and v >= early_above:
            return xs[i], v
        if v < best_v:
            lo_b = xs[max(i - 2, 0)]
            gx, gv = golden_max(f, lo_b, xs[i], tol, early_above)
            if gv >= best_v:
                return gx, gv
            return best_x, best_v
        best_x, best_v = xs[i], v
    # still rising at the upper end: the maximizer sits in the last interval
    gx, gv = golden_max(f, xs[-2] if len(xs) > 1 else a, b, tol, early_above)
    if gv >= best_v:
        return gx, gv
    return best_x, best_v


def _max_e_rb(src: Source, r: float, er: float, cfg: SolverConfig,
              lo: float = 0.0, hi: float = 1.0,
              early_above: float | None = None) -> tuple:
    return bracketed_concave_max(lambda t: e_rb(src, r, er, t, cfg).value,
                                 lo, hi, 1e-5, early_above)


def _max_e_ex(src: Source, r: float, er: float, cfg: SolverConfig,
              early_above: float | None = None) -> tuple:
    return bracketed_concave_max(lambda t: e_ex(src, r, er, t, cfg).value,
                                 1.0, T_MAX, 1e-3, early_above)


def _max_e_sp(src: Source, r: float, er: float, cfg: SolverConfig,
              early_above: float | None = None) -> float:
    x, val = _max_e_rb(src, r, er, cfg, 0.0, T_MAX, early_above=early_above)
    if early_above is not None and val >= early_above:
        return val
    if not math.isfinite(val):
        return val
    # terminal-slope check: a maximum pinned at the cap with positive slope
    # means the supremum over the unbounded range is still ahead
    if T_MAX - x < 0.5:
        probe = e_rb(src, r, er, T_MAX - 1.0, cfg).value
        if val > probe + 1e-12:
            return math.inf
    return val


def achievable(src: Source, r: float, er: float, ee: float,
               cfg: SolverConfig = DEFAULT_CONFIG) -> bool:
    """True when a code with error exponent ee, rate r, and excess-rate
    exponent er is guaranteed to exist. Boundary ties count as achievable."""
    if min(r, er, ee) < 0:
        raise ValueError("r, er, ee must be non-negative")
    if ee == 0.0:
        return True
    _, val = _max_e_rb(src, r, er, cfg, early_above=ee)
    if val >= ee:
        return True
    _, val_ex = _max_e_ex(src, r, er, cfg, early_above=ee)
    return val_ex >= ee


def not_achievable(src: Source, r: float, er: float, ee: float,
                   cfg: SolverConfig = DEFAULT_CONFIG) -> bool:
    """True when no code can combine error exponent ee with excess-rate
    exponent er at rate r."""
    if min(r, er, ee) < 0:
        raise ValueError("r, er, ee must be non-negative")
    if ee == 0.0:
        return False
    return _max_e_sp(src, r, er, cfg, early_above=ee) < ee


def _er_bracket_top(src: Source) -> float:
    uniform = np.full(src.x_size, 1.0 / src.x_size)
    return kl_divergence(uniform, src.px.probs) + 1.0


def _condition_threshold(condition, top: float) -> float:
    """Flip point of a monotone condition(er) that is true on [0, threshold);
    0 when it never holds, +inf when it holds up to the bracket top."""
    if not condition(0.0):
        return 0.0
    if condition(top):
        return math.inf
    lo, hi = 0.0, top
    while hi - lo > LINE_SEARCH_TOL:
        mid = 0.5 * (lo + hi)
        if condition(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def excess_rate_lower(src: Source, r: float, ee: float,
                      cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Largest excess-rate exponent certified achievable at rate r and error
    exponent ee; 0 when even er=0 is not certified (r at or below the rate
    function at the source prior), +inf when every er in the search bracket
    is achievable (r above the rate function's maximum)."""
    return _condition_threshold(lambda er: achievable(src, r, er, ee, cfg),
                                _er_bracket_top(src))


def excess_rate_upper(src: Source, r: float, ee: float,
                      cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Largest excess-rate exponent not ruled out by the sphere-packing
    converse at rate r and error exponent ee."""
    return _condition_threshold(lambda er: not not_achievable(src, r, er, ee, cfg),
                                _er_bracket_top(src))


def excess_rate_point(src: Source, r: float, ee: float,
                      cfg: SolverConfig = DEFAULT_CONFIG) -> ExcessRatePoint:
    lower = excess_rate_lower(src, r, ee, cfg)
    upper = excess_rate_upper(src, r, ee, cfg)
    er_probe = lower if math.isfinite(lower) else 0.0
    return ExcessRatePoint(r, lower, upper,
                           achievable(src, r, er_probe, ee, cfg),
                           not_achievable(src, r, er_probe, ee, cfg))


_RHO_BY_NAME = {"rb": rho_rb, "ex": rho_ex, "sp": rho_sp, "ub": rho_ub}


def _binary_prior_grid(src: Source, grid_res: int):
    if src.x_size > 3:
        raise TooLarge("prior grids support |X| <= 3 only")
    if src.x_size == 3:
        if (grid_res + 1) ** 2 > 4_000_000:
            raise TooLarge("ternary prior grid too fine")
        for i in range(grid_res + 1):
            for j in range(grid_res + 1 - i):
                yield np.array([i / grid_res, j / grid_res, (grid_res - i - j) / grid_res])
    else:
        for k in range(grid_res + 1):
            yield np.array([k / grid_res, 1.0 - k / grid_res])


def excess_rate_direct(src: Source, ee: float, r: float, which: str,
                       grid_res: int = 2000, cfg: SolverConfig = DEFAULT_CONFIG) -> float:
    """Excess-rate exponent by direct definition: the smallest prior
    divergence among grid types whose rate function meets r; +inf when no
    grid type does."""
    if which not in _RHO_BY_NAME:
        raise ValueError(f"unknown rate function {which!r}")
    rho_fn = _RHO_BY_NAME[which]
    px = src.px.probs
    best = math.inf
    for qxa in _binary_prior_grid(src, grid_res):
        d = kl_divergence(qxa, px)
        if d >= best:
            continue
        if rho_fn(src, qxa, ee, cfg) >= r:
            best = d
    return best


def rate_function_peak(src: Source, ee: float, grid_res: int = 2000,
                       cfg: SolverConfig = DEFAULT_CONFIG, which: str = "ub") -> tuple:
    """Maximum of a rate function over the prior grid; returns (r0, argmax prior)."""
    rho_fn = _RHO_BY_NAME[which]
    best, best_qx = -math.inf, None
    for qxa in _binary_prior_grid(src, grid_res):
        val = rho_fn(src, qxa, ee, cfg)
        if val > best:
            best, best_qx = val, qxa
    return best, best_qx


def fixed_rate_comparison(src: Source, ee: float, r_grid=None, grid_res: int = 400,
                          cfg: SolverConfig = DEFAULT_CONFIG) -> tuple:
    """Fixed-rate coding must budget for the worst type: its excess-rate
    curve is 0 up to the rate-function maximum r0 and +inf beyond.

    Returns (r0, peak prior, curve) with the curve evaluated on ``r_grid``
    (empty list when no grid is given).
    """
    r0, peak_qx = rate_function_peak(src, ee, grid_res, cfg)
    curve = []
    if r_grid is not None:
        curve = [0.0 if r <= r0 else math.inf for r in r_grid]
    return r0, peak_qx, curve


def average_rate_comparison(src: Source, ee: float, r_grid, grid_res: int = 2000,
                            cfg: SolverConfig = DEFAULT_CONFIG) -> list:
    """Excess-rate curve of the average-rate-optimal scheme: 0 up to the rate
    function at the source prior, then the smallest prior divergence among
    types whose entropy reaches the target rate."""
    px = src.px.probs
    r_at_px = rho_ub(src, px, ee, cfg)
    priors = list(_binary_prior_grid(src, grid_res))
    ents = np.array([entropy(q) for q in priors])
    divs = np.array([kl_divergence(q, px) for q in priors])
    out = []
    for r in r_grid:
        if r <= r_at_px:
            out.append(0.0)
            continue
        ok = ents >= r
        out.append(float(divs[ok].min()) if np.any(ok) else math.inf)
    return out


def max_error_exponent_fixed_rate(src: Source, rate: float, grid_res: int = 200,
                                  cfg: SolverConfig = DEFAULT_CONFIG,
                                  ee_hi: float = 1.0, tol: float = 2e-4) -> float:
    """Largest error exponent a fixed-rate code of the given rate supports:
    the flip point of max-over-types rate function <= rate, which is
    monotone in the error-exponent target."""
    def fits(ee):
        return rate_function_peak(src, ee, grid_res, cfg)[0] <= rate

    if not fits(0.0):
        return 0.0
    lo, hi = 0.0, ee_hi
    if fits(hi):
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
