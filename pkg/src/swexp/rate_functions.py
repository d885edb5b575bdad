"""Breakpoints and piecewise evaluation of the random-binning, expurgated,
and sphere-packing rate functions, plus the weak-correlation closed form.

Each rate function is zero up to the input-marginal divergence, then rises
(curved and/or affine-with-unit-slope segments) until it saturates at the
entropy of the evaluation type. Case boundaries are half-open with ties
resolved toward the lower case; the functions are continuous across them,
so the choice only matters for which branch does the computing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotConverged
from .probability import (
    Pmf,
    Source,
    bhattacharyya_avg,
    bhattacharyya_matrix,
    entropy,
    kl_divergence,
)
from .solvers import DEFAULT_CONFIG, SolverConfig, _avg_div, _mutual_info_rows, v_ex, v_rb


@dataclass(frozen=True)
class Breakpoints:
    """Error-exponent thresholds of the three rate functions for one
    evaluation type, with the two unconstrained minimizers they come from."""

    ee0: float
    ee_a_rb: float
    ee_max_rb: float
    ee_a_ex: float
    ee_max_ex: float
    ee_max_sp: float
    q_prime_ygx: np.ndarray
    q_prime_xtgx: np.ndarray


@dataclass(frozen=True)
class RateCurvePoint:
    ee: float
    rho_rb: float
    rho_ex: float
    rho_sp: float
    rho_ub: float


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)


def _min_b_plus_i_coupling(qxa: np.ndarray, dmat: np.ndarray,
                           max_iters: int = 100_000) -> np.ndarray:
    """Minimizer of B + I over couplings with both marginals qxa, by
    iterative proportional fitting of the distance-tilted product."""
    with np.errstate(over="ignore"):
        kernel = np.where(np.isfinite(dmat), np.exp(-np.where(np.isfinite(dmat), dmat, 0.0)), 0.0)
    q = np.outer(qxa, qxa) * kernel
    for _ in range(max_iters):
        rs = q.sum(axis=1)
        scale = np.where(rs > 0, np.where(qxa > 0, qxa, 0.0) / np.where(rs > 0, rs, 1.0), 0.0)
        q = q * scale[:, None]
        cs = q.sum(axis=0)
        scale = np.where(cs > 0, np.where(qxa > 0, qxa, 0.0) / np.where(cs > 0, cs, 1.0), 0.0)
        q = q * scale[None, :]
        if (np.max(np.abs(q.sum(axis=1) - qxa)) < 1e-14
                and np.max(np.abs(q.sum(axis=0) - qxa)) < 1e-14):
            return q
    raise NotConverged("marginal fitting for the distance-tilted coupling did not settle")


def _coupling_mutual_info(joint: np.ndarray) -> float:
    r = joint.sum(axis=1)
    c = joint.sum(axis=0)
    mask = joint > 0
    return float(np.sum(joint[mask] * (np.log(joint[mask])
                                       - np.log((r[:, None] * c[None, :])[mask]))))


def breakpoints(src: Source, qx, cfg: SolverConfig = DEFAULT_CONFIG) -> Breakpoints:
    """All six thresholds for the given evaluation type, computed from the
    two unconstrained minimizations (budget released for the random-binning
    family, distance target released for the expurgated family)."""
    qxa = _probs(qx)
    px = src.px.probs
    w = src.pygx.rows
    d0 = kl_divergence(qxa, px)

    res = v_rb(src, qxa, math.inf, 1.0, cfg)
    q_prime_ygx = res.minimizer
    dterm = _avg_div(q_prime_ygx, w, qxa)
    iterm = _mutual_info_rows(qxa, q_prime_ygx)
    ee_a_rb = d0 + dterm
    ee_max_rb = d0 + iterm + dterm

    dmat = bhattacharyya_matrix(src.pygx)
    coupling = _min_b_plus_i_coupling(qxa, dmat)
    active = qxa > 0
    q_prime_xtgx = np.full_like(coupling, 1.0 / len(qxa))
    q_prime_xtgx[active] = coupling[active] / coupling[active].sum(axis=1, keepdims=True)
    ee_a_ex = d0 + bhattacharyya_avg(coupling, dmat)
    ee_max_ex = d0 + bhattacharyya_avg(np.outer(qxa, qxa), dmat)

    qy0 = qxa @ w
    ee_max_sp = 2.0 * d0 + _avg_div(np.broadcast_to(qy0, w.shape), w, qxa)

    return Breakpoints(d0, ee_a_rb, ee_max_rb, ee_a_ex, ee_max_ex, ee_max_sp,
                       q_prime_ygx, q_prime_xtgx)


def rho_rb(src: Source, qx, ee: float, cfg: SolverConfig = DEFAULT_CONFIG,
           bps: Breakpoints | None = None) -> float:
    """Random-binning rate function at one error-exponent target."""
    qxa = _probs(qx)
    if bps is None:
        bps = breakpoints(src, qxa, cfg)
    h = entropy(qxa)
    if ee <= bps.ee0:
        return 0.0
    if ee <= bps.ee_a_rb:
        return ee + h - bps.ee0 - v_rb(src, qxa, ee, 1.0, cfg).value
    if ee <= bps.ee_max_rb:
        return h - (bps.ee_max_rb - ee)
    return h


def rho_ex(src: Source, qx, ee: float, cfg: SolverConfig = DEFAULT_CONFIG,
           bps: Breakpoints | None = None) -> float:
    """Expurgated rate function at one error-exponent target."""
    qxa = _probs(qx)
    if bps is None:
        bps = breakpoints(src, qxa, cfg)
    h = entropy(qxa)
    if ee <= bps.ee0:
        return 0.0
    if ee <= bps.ee_a_ex:
        iterm = _coupling_mutual_info(qxa[:, None] * bps.q_prime_xtgx)
        return ee - bps.ee_a_ex + h - iterm
    if ee <= bps.ee_max_ex:
        return h - v_ex(src, qxa, ee, cfg).value
    return h


def rho_sp(src: Source, qx, ee: float, cfg: SolverConfig = DEFAULT_CONFIG,
           bps: Breakpoints | None = None) -> float:
    """Sphere-packing rate function at one error-exponent target."""
    qxa = _probs(qx)
    if bps is None:
        bps = breakpoints(src, qxa, cfg)
    h = entropy(qxa)
    if ee <= bps.ee0:
        return 0.0
    if ee <= bps.ee_max_sp:
        return h - v_rb(src, qxa, ee, 0.0, cfg).value
    return h


def rho_ub(src: Source, qx, ee: float, cfg: SolverConfig = DEFAULT_CONFIG,
           bps: Breakpoints | None = None) -> float:
    """The tighter of the two achievable rate functions."""
    qxa = _probs(qx)
    if bps is None:
        bps = breakpoints(src, qxa, cfg)
    return min(rho_rb(src, qxa, ee, cfg, bps), rho_ex(src, qxa, ee, cfg, bps))


def rho_curve(src: Source, qx, ee_grid, cfg: SolverConfig = DEFAULT_CONFIG) -> list[RateCurvePoint]:
    """All three rate functions plus their upper envelope on a sorted grid
    of error-exponent targets."""
    qxa = _probs(qx)
    grid = np.asarray(ee_grid, dtype=float)
    if grid.size > 1 and np.any(np.diff(grid) < 0):
        raise ValueError("ee_grid must be sorted ascending")
    bps = breakpoints(src, qxa, cfg)
    points = []
    for ee in grid:
        rb = rho_rb(src, qxa, float(ee), cfg, bps)
        ex = rho_ex(src, qxa, float(ee), cfg, bps)
        sp = rho_sp(src, qxa, float(ee), cfg, bps)
        points.append(RateCurvePoint(float(ee), rb, ex, sp, min(rb, ex)))
    return points


def lambda_sweep(src: Source, qx, lambdas, cfg: SolverConfig = DEFAULT_CONFIG) -> list[tuple]:
    """Trace the curved part of the random-binning rate function
    parametrically: each multiplier value yields one (ee, rho) point, with
    the curve exhausted as the geometric-mixture exponent runs from 1/2
    toward 1."""
    qxa = _probs(qx)
    w = src.pygx.rows
    d0 = kl_divergence(qxa, src.px.probs)
    h = entropy(qxa)
    out = []
    for lam in lambdas:
        if lam < 0:
            raise ValueError("sweep multipliers must be non-negative")
        res = v_rb(src, qxa, math.inf, lam + 1.0, cfg)
        ee = d0 + _avg_div(res.minimizer, w, qxa)
        rho = h - _mutual_info_rows(qxa, res.minimizer)
        out.append((ee, rho))
    return out


def rho_rb_weak_approx(src: Source, qx, ee: float) -> tuple:
    """Closed-form weak-correlation approximation of the random-binning rate
    function; returns (value, alpha_bar).

    Valid while ee stays within a quarter of the mutual-information term
    above the input divergence; the same expression approximates the
    sphere-packing rate function on its whole rising segment.
    """
    qxa = _probs(qx)
    w = src.pygx.rows
    d0 = kl_divergence(qxa, src.px.probs)
    if ee < d0 - 1e-12:
        raise ValueError("ee must be at least the input-marginal divergence")
    h = entropy(qxa)
    qy0 = qxa @ w
    dterm = _avg_div(w, np.broadcast_to(qy0, w.shape), qxa)
    excess = max(ee - d0, 0.0)
    if excess == 0.0:
        alpha_bar = 1.0
    elif dterm == 0.0:
        alpha_bar = -math.inf
    else:
        alpha_bar = 1.0 - math.sqrt(excess / dterm)
    alpha_star = max(alpha_bar, 0.5)
    value = ee + h - d0 - (alpha_star**2 + (1.0 - alpha_star) ** 2) * dterm
    return value, alpha_bar


def write_curve_csv(points: list[RateCurvePoint], fh, extras: dict | None = None):
    """Emit curve points as CSV with 12 significant digits; infinities are
    written as the literal token 'inf'. ``extras`` adds columns keyed by
    name, each a sequence aligned with ``points``."""
    extras = extras or {}
    header = ["ee", "rho_rb", "rho_ex", "rho_sp", "rho_ub", *extras.keys()]
    fh.write(",".join(header) + "\n")
    for i, p in enumerate(points):
        row = [p.ee, p.rho_rb, p.rho_ex, p.rho_sp, p.rho_ub]
        row.extend(extras[k][i] for k in extras)
        fh.write(",".join(format(v, ".12g") for v in row) + "\n")
