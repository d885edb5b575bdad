"""Brute-force grid minimizers for every solver objective.

These are deliberately dumb: they enumerate simplex grids and take the
minimum, serving as independent cross-checks for the iterative solvers.
Grid minima upper-bound the true minima (every evaluated point is feasible,
except for the band-relaxed equality in ``grid_v_ex``), and approach them
at a rate set by the grid resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .probability import Source, bhattacharyya_matrix, kl_divergence, xlogx

INF = math.inf


@dataclass(frozen=True)
class GridSpec:
    """Resolution is the denominator of the grid fractions; max_points guards
    the total number of candidate evaluations."""

    resolution: int = 200
    max_points: int = 50_000_000

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be at least 2")
        if self.max_points < 1:
            raise ValueError("max_points must be positive")


def _row_grid(res: int, k: int) -> np.ndarray:
    """All pmfs over k letters with entries that are multiples of 1/res."""
    combos = []

    def rec(prefix, remaining, parts_left):
        if parts_left == 1:
            combos.append(prefix + (remaining,))
            return
        for c in range(remaining + 1):
            rec(prefix + (c,), remaining - c, parts_left - 1)

    rec((), res, k)
    return np.asarray(combos, dtype=float) / res


def _entropies(rows: np.ndarray) -> np.ndarray:
    return -xlogx(rows).sum(axis=1)


def _divergences_to_row(rows: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """D(rows_i || ref) for every grid row; +inf on support violations."""
    out = np.full(rows.shape[0], INF)
    ok = ~np.any((rows > 0) & (ref[None, :] == 0), axis=1)
    if np.any(ok):
        r = rows[ok]
        safe_ref = np.where(ref > 0, ref, 1.0)
        out[ok] = (xlogx(r) - np.where(r > 0, r * np.log(safe_ref)[None, :], 0.0)).sum(axis=1)
    return out


def _require_binary_x(src: Source, name: str):
    if src.x_size != 2:
        raise TooLarge(f"{name} enumerates conditional-row grids and supports |X| = 2 only")


def _check_budget(count: int, gs: GridSpec, name: str):
    if count > gs.max_points:
        raise TooLarge(f"{name} would evaluate {count} grid points "
                       f"(max_points = {gs.max_points})")


def grid_v_rb(src: Source, qx, ee: float, eta: float, gs: GridSpec) -> float:
    """Grid minimum of I + eta*D over conditionals within the divergence
    budget; +inf when no grid point is feasible."""
    _require_binary_x(src, "grid_v_rb")
    qxa = np.asarray(qx.probs if hasattr(qx, "probs") else qx, dtype=float)
    w = src.pygx.rows
    budget = ee - kl_divergence(qxa, src.px.probs)
    rows = _row_grid(gs.resolution, src.y_size)
    m = rows.shape[0]
    _check_budget(m * m, gs, "grid_v_rb")
    h = _entropies(rows)
    d0 = _divergences_to_row(rows, w[0])
    d1 = _divergences_to_row(rows, w[1])
    q0, q1 = qxa
    best = INF
    for i in range(m):
        cons = q0 * d0[i] + q1 * d1
        feasible = cons <= budget
        if not np.any(feasible):
            continue
        mix = q0 * rows[i][None, :] + q1 * rows[feasible]
        h_mix = -xlogx(mix).sum(axis=1)
        obj = h_mix - (q0 * h[i] + q1 * h[feasible]) + eta * cons[feasible]
        val = float(obj.min())
        if val < best:
            best = val
    return best


def _binary_couplings(qxa: np.ndarray, res: int) -> np.ndarray:
    """Grid of 2x2 couplings with both marginals qxa, flattened as rows
    (q00, q01, q10, q11)."""
    q0 = qxa[0]
    lo = max(0.0, 2.0 * q0 - 1.0)
    a = lo + (q0 - lo) * np.arange(res + 1) / res
    out = np.empty((res + 1, 4))
    out[:, 0] = a
    out[:, 1] = q0 - a
    out[:, 2] = q0 - a
    out[:, 3] = 1.0 - 2.0 * q0 + a
    return np.maximum(out, 0.0)


def _coupling_info(flat: np.ndarray, qxa: np.ndarray) -> np.ndarray:
    """Mutual information of each flattened 2x2 coupling with marginals qxa."""
    marg = np.array([qxa[0], qxa[1], qxa[0], qxa[1]])
    ref = np.array([qxa[0], qxa[0], qxa[1], qxa[1]])[None, :] * marg[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(flat > 0, flat * (np.log(np.where(flat > 0, flat, 1.0))
                                           - np.log(np.where(ref > 0, ref, 1.0))), 0.0)
    return terms.sum(axis=1)


def grid_v_ex(src: Source, qx, ee: float, gs: GridSpec) -> float:
    """Grid minimum of the coupling mutual information subject to the
    distance-plus-divergence target, relaxed to a band of width
    2/resolution; +inf when the band captures no grid point."""
    _require_binary_x(src, "grid_v_ex")
    qxa = np.asarray(qx.probs if hasattr(qx, "probs") else qx, dtype=float)
    bstar = ee - kl_divergence(qxa, src.px.probs)
    dmat = bhattacharyya_matrix(src.pygx)
    _check_budget(gs.resolution + 1, gs, "grid_v_ex")
    flat = _binary_couplings(qxa, gs.resolution)
    dflat = dmat.ravel()
    finite = np.isfinite(dflat)
    b = np.where(np.any(flat[:, ~finite] > 0, axis=1), INF,
                 flat[:, finite] @ dflat[finite])
    band = 1.0 / gs.resolution
    feasible = np.abs(b - bstar) <= band
    if not np.any(feasible):
        return INF
    return float(_coupling_info(flat[feasible], qxa).min())


def grid_e_rb(src: Source, r: float, er: float, t: float, gs: GridSpec) -> float:
    """Grid minimum of the random-binning exponent trade-off objective over
    priors within divergence er and all conditional rows."""
    _require_binary_x(src, "grid_e_rb")
    px = src.px.probs
    w = src.pygx.rows
    res = gs.resolution
    rows = _row_grid(res, src.y_size)
    m = rows.shape[0]
    _check_budget((res + 1) * m * m, gs, "grid_e_rb")
    h = _entropies(rows)
    d0 = _divergences_to_row(rows, w[0])
    d1 = _divergences_to_row(rows, w[1])
    best = INF
    for k in range(res + 1):
        q0 = k / res
        qxa = np.array([q0, 1.0 - q0])
        d_prior = kl_divergence(qxa, px)
        if d_prior > er:
            continue
        h_prior = -float(xlogx(qxa).sum())
        for i in range(m):
            if q0 > 0 and not np.isfinite(d0[i]):
                continue
            pen = q0 * d0[i] + (1.0 - q0) * d1
            mix = q0 * rows[i][None, :] + (1.0 - q0) * rows
            h_mix = -xlogx(mix).sum(axis=1)
            h_back = h_prior + (q0 * h[i] + (1.0 - q0) * h) - h_mix
            obj = d_prior + pen + t * (r - h_back)
            val = float(obj.min())
            if val < best:
                best = val
    return best


def grid_e_ex(src: Source, r: float, er: float, t: float, gs: GridSpec) -> float:
    """Grid minimum of the expurgated exponent trade-off objective over
    equal-marginal couplings with prior divergence at most er."""
    _require_binary_x(src, "grid_e_ex")
    px = src.px.probs
    dmat = bhattacharyya_matrix(src.pygx)
    dflat = dmat.ravel()
    finite = np.isfinite(dflat)
    res = gs.resolution
    _check_budget((res + 1) ** 2, gs, "grid_e_ex")
    best = INF
    for k in range(res + 1):
        q0 = k / res
        qxa = np.array([q0, 1.0 - q0])
        d_prior = kl_divergence(qxa, px)
        if d_prior > er:
            continue
        h_prior = -float(xlogx(qxa).sum())
        flat = _binary_couplings(qxa, res)
        b = np.where(np.any(flat[:, ~finite] > 0, axis=1), INF,
                     flat[:, finite] @ dflat[finite])
        info = _coupling_info(flat, qxa)
        obj = d_prior + b + t * (r - h_prior + info)
        val = float(obj.min())
        if val < best:
            best = val
    return best


def grid_error_exponent_rb(src: Source, rate_fn_samples, gs: GridSpec) -> float:
    """Grid minimum of D(Q_XY||P_XY) + [rho(Q_X) - H(Q_{X|Y}|Q_Y)]_+ with the
    rate function supplied per grid prior.

    ``rate_fn_samples`` is either a callable mapping a prior vector to nats
    or a precomputed array aligned with the binary prior grid k/resolution.
    """
    _require_binary_x(src, "grid_error_exponent_rb")
    px = src.px.probs
    w = src.pygx.rows
    res = gs.resolution
    rows = _row_grid(res, src.y_size)
    m = rows.shape[0]
    _check_budget((res + 1) * m * m, gs, "grid_error_exponent_rb")
    h = _entropies(rows)
    d0 = _divergences_to_row(rows, w[0])
    d1 = _divergences_to_row(rows, w[1])
    if callable(rate_fn_samples):
        rho = np.array([rate_fn_samples(np.array([k / res, 1.0 - k / res]))
                        for k in range(res + 1)])
    else:
        rho = np.asarray(rate_fn_samples, dtype=float)
        if rho.size != res + 1:
            raise ValueError("rate samples must align with the prior grid")
    best = INF
    for k in range(res + 1):
        q0 = k / res
        qxa = np.array([q0, 1.0 - q0])
        d_prior = kl_divergence(qxa, px)
        if d_prior >= best:
            continue
        h_prior = -float(xlogx(qxa).sum())
        for i in range(m):
            if q0 > 0 and not np.isfinite(d0[i]):
                continue
            pen = q0 * d0[i] + (1.0 - q0) * d1
            mix = q0 * rows[i][None, :] + (1.0 - q0) * rows
            h_mix = -xlogx(mix).sum(axis=1)
            h_back = h_prior + (q0 * h[i] + (1.0 - q0) * h) - h_mix
            obj = d_prior + pen + np.maximum(rho[k] - h_back, 0.0)
            val = float(obj.min())
            if val < best:
                best = val
    return best
