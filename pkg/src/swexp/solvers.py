"""Iterative solvers for the four constrained-divergence problems behind the
rate-function and excess-rate bounds.

The two alternating-minimization solvers (``v_rb``, ``e_rb``) and the
iterative-scaling solver (``v_ex``) reduce every step to a closed-form
mapping plus at most a one-dimensional monotone root search, so they scale
to any alphabet size. ``e_ex`` has no closed-form block update and is
solved as a convex program by projected gradient over symmetric couplings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BracketFailure, DegenerateColumn, DegenerateRow, Infeasible, NotConverged
from .probability import (
    CondPmf,
    JointPmf,
    Pmf,
    Source,
    bhattacharyya_avg,
    bhattacharyya_matrix,
    entropy,
    kl_divergence,
    xlogx,
)

BRACKET_LIMIT = 2.0**40


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules shared by the iterative solvers."""

    obj_tol: float = 1e-10
    max_outer_iters: int = 10_000
    bisect_tol: float = 1e-12
    bracket_growth: float = 2.0
    max_bisect_iters: int = 200

    def __post_init__(self):
        if min(self.obj_tol, self.bisect_tol, self.bracket_growth) <= 0:
            raise ValueError("tolerances and growth factor must be positive")
        if min(self.max_outer_iters, self.max_bisect_iters) < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass(frozen=True)
class SolveResult:
    value: float
    minimizer: np.ndarray
    multiplier: float
    iters: int
    converged: bool


DEFAULT_CONFIG = SolverConfig()


def _probs(p) -> np.ndarray:
    if isinstance(p, Pmf):
        return p.probs
    if isinstance(p, (CondPmf, JointPmf)):
        raise TypeError("expected a pmf vector")
    return np.asarray(p, dtype=float)


def _rows(m) -> np.ndarray:
    if isinstance(m, CondPmf):
        return m.rows
    if isinstance(m, JointPmf):
        return m.probs
    return np.asarray(m, dtype=float)


def _row_divergences(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """D(q_x || p_x) per row; +inf on support violations."""
    out = np.full(q.shape[0], np.inf)
    ok = ~np.any((q > 0) & (p == 0), axis=1)
    if np.any(ok):
        qq = q[ok]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(qq > 0, qq * (np.log(np.where(qq > 0, qq, 1.0))
                                           - np.log(np.where(p[ok] > 0, p[ok], 1.0))), 0.0)
        out[ok] = terms.sum(axis=1)
    return out


def _avg_div(q: np.ndarray, p: np.ndarray, weights: np.ndarray) -> float:
    active = weights > 0
    if not np.any(active):
        return 0.0
    return float(weights[active] @ _row_divergences(q[active], p[active]))


def _div_to_vector(q: np.ndarray, v: np.ndarray, weights: np.ndarray) -> float:
    ref = np.broadcast_to(v, q.shape)
    return _avg_div(q, ref, weights)


def _mutual_info_rows(weights: np.ndarray, rows: np.ndarray) -> float:
    qy = weights @ rows
    return _div_to_vector(rows, qy, weights)


def _geometric_rows(w: np.ndarray, qy: np.ndarray, alpha: float,
                    active: np.ndarray | None = None) -> np.ndarray:
    """Row-normalized w^alpha * qy^(1-alpha), uniform placeholder on inactive
    or degenerate rows when a mask is given."""
    raw = np.power(w, alpha) * np.power(qy[None, :], 1.0 - alpha)
    z = raw.sum(axis=1)
    out = np.empty_like(raw)
    if active is None:
        if np.any(z == 0):
            raise DegenerateRow(f"rows {np.flatnonzero(z == 0).tolist()} have zero normalizer")
        out = raw / z[:, None]
    else:
        good = active & (z > 0)
        if np.any(active & (z == 0)):
            raise DegenerateRow(
                f"active rows {np.flatnonzero(active & (z == 0)).tolist()} have zero normalizer")
        out[good] = raw[good] / z[good, None]
        out[~good] = 1.0 / w.shape[1]
    return out


def map_geometric(w: CondPmf | np.ndarray, qy: Pmf | np.ndarray, alpha: float) -> np.ndarray:
    """Geometric combination of channel rows with a reference output pmf.

    Returns a row-stochastic matrix proportional per row to
    w(y|x)^alpha * qy(y)^(1-alpha). At alpha=1 it reproduces w, at alpha=0
    every row equals qy.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return _geometric_rows(_rows(w), _probs(qy), alpha)


def _tilted_rows(q: np.ndarray, dmat: np.ndarray, lam: float,
                 active: np.ndarray | None = None) -> np.ndarray:
    """Rows re-weighted by exp(-lam * d), computed in the log domain.

    Entries where q is zero (or d infinite) stay zero, so a negative lam
    cannot resurrect excluded pairs.
    """
    allowed = (q > 0) & np.isfinite(dmat)
    with np.errstate(divide="ignore"):
        logits = np.where(allowed, np.log(np.where(allowed, q, 1.0)) - lam * np.where(
            np.isfinite(dmat), dmat, 0.0), -np.inf)
    out = np.empty_like(q)
    n = q.shape[0]
    mask = np.ones(n, dtype=bool) if active is None else active
    for x in range(n):
        if not mask[x]:
            out[x] = 1.0 / q.shape[1]
            continue
        row = logits[x]
        top = row.max()
        if top == -np.inf:
            if active is None:
                raise DegenerateRow(f"row {x} has zero normalizer")
            out[x] = 1.0 / q.shape[1]
            continue
        e = np.exp(row - top)
        out[x] = e / e.sum()
    return out


def map_bhatt(q: CondPmf | np.ndarray, w: CondPmf | np.ndarray, lam: float) -> np.ndarray:
    """Exponential tilt of a conditional toward small (lam>0) or large (lam<0)
    Bhattacharyya distance under the channel w."""
    return _tilted_rows(_rows(q), bhattacharyya_matrix(w), lam)


def map_lumping(qxx: JointPmf | np.ndarray, target: Pmf | np.ndarray) -> np.ndarray:
    """Rescale the columns of a joint so its second marginal equals ``target``."""
    joint = _rows(qxx)
    tgt = _probs(target)
    col = joint.sum(axis=0)
    out = np.zeros_like(joint)
    for j in range(joint.shape[1]):
        if tgt[j] == 0:
            continue
        if col[j] == 0:
            raise DegenerateColumn(f"column {j} has target mass but zero source mass")
        out[:, j] = joint[:, j] * (tgt[j] / col[j])
    return out


def map_h(px: Pmf | np.ndarray, h1: np.ndarray, h2: np.ndarray,
          lam: float, t: float) -> np.ndarray:
    """Tilted prior proportional to px^((1+lam)/(1+lam+t)) * exp(-(h1 + t*h2)/(1+lam+t))."""
    p = _probs(px)
    if lam < 0 or t < 0:
        raise ValueError("lam and t must be non-negative")
    denom = 1.0 + lam + t
    with np.errstate(divide="ignore"):
        logq = np.where(p > 0,
                        ((1.0 + lam) * np.log(np.where(p > 0, p, 1.0))
                         - np.asarray(h1, dtype=float) - t * np.asarray(h2, dtype=float)) / denom,
                        -np.inf)
    top = logq.max()
    e = np.exp(logq - top)
    return e / e.sum()


def bisect_monotone(f, target: float, bracket: tuple, cfg: SolverConfig = DEFAULT_CONFIG,
                    expand: str = "none") -> float:
    """Root of f(x) = target for a monotone f.

    ``expand`` widens the bracket geometrically ('up' moves only the upper
    end, 'both' grows both ends away from zero) until the endpoints straddle
    the target, up to |x| <= 2^40.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise ValueError("bracket must satisfy lo < hi")
    flo, fhi = f(lo), f(hi)

    def straddles(a, b):
        return (a - target) * (b - target) <= 0

    while not straddles(flo, fhi):
        if expand == "none":
            raise BracketFailure(
                f"f({lo})={flo:.6g}, f({hi})={fhi:.6g} do not straddle {target:.6g}")
        if expand == "up":
            hi = max(hi * cfg.bracket_growth, cfg.bracket_growth)
        elif expand == "both":
            hi = max(hi * cfg.bracket_growth, cfg.bracket_growth)
            lo = min(lo * cfg.bracket_growth, -cfg.bracket_growth)
        else:
            raise ValueError(f"unknown expand mode {expand!r}")
        if max(abs(lo), abs(hi)) > BRACKET_LIMIT:
            raise BracketFailure(
                f"no straddle of {target:.6g} within |x| <= 2^40")
        flo, fhi = f(lo), f(hi)

    decreasing = flo > fhi
    for _ in range(cfg.max_bisect_iters):
        if hi - lo < cfg.bisect_tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm >= target) == decreasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def v_rb(src: Source, qx: Pmf | np.ndarray, ee: float, eta: float,
         cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Minimum of I(qx x Q_{Y|X}) + eta * D(Q_{Y|X}||W|qx) over conditionals
    whose joint divergence from the source is at most ee.

    Alternating minimization: the conditional step is a geometric mixture
    of the channel with the current output reference, with the mixture
    exponent bisected onto the divergence budget whenever the constraint
    binds; the reference step is the output marginal.
    """
    if eta < 0:
        raise ValueError("eta must be non-negative")
    qxa = _probs(qx)
    px = src.px.probs
    w = src.pygx.rows
    d0 = kl_divergence(qxa, px)
    budget = ee - d0
    if budget < -1e-12:
        raise Infeasible(f"ee={ee:.6g} is below the input-marginal divergence {d0:.6g}")
    budget = max(budget, 0.0)
    active = qxa > 0

    if budget == 0.0:
        # the constraint set collapses to the channel itself
        value = _mutual_info_rows(qxa, w)
        return SolveResult(value, w.copy(), 1.0, 0, True)

    qy = qxa @ w
    alpha0 = eta / (1.0 + eta)
    prev = np.inf
    rows = w
    alpha = alpha0
    for k in range(1, cfg.max_outer_iters + 1):
        rows = _geometric_rows(w, qy, alpha0, active)
        if _avg_div(rows, w, qxa) <= budget:
            alpha = alpha0
        else:
            alpha = bisect_monotone(
                lambda a: _avg_div(_geometric_rows(w, qy, a, active), w, qxa),
                budget, (alpha0, 1.0), cfg)
            rows = _geometric_rows(w, qy, alpha, active)
        qy = qxa @ rows
        obj = _mutual_info_rows(qxa, rows) + eta * _avg_div(rows, w, qxa)
        delta = prev - obj
        if delta < cfg.obj_tol:
            return SolveResult(obj, rows, alpha, k, True)
        prev = obj
    raise NotConverged(f"v_rb made no progress below obj_tol in {cfg.max_outer_iters} iterations",
                       SolveResult(prev, rows, alpha, cfg.max_outer_iters, False), delta)


def v_ex(src: Source, qx: Pmf | np.ndarray, ee: float,
         cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Minimum mutual information over couplings with both marginals qx whose
    expected Bhattacharyya distance plus the input divergence equals ee.

    Iterative scaling: the tilt step matches the distance constraint by a
    one-dimensional root search over the tilt strength, the lumping step
    restores the second marginal.
    """
    qxa = _probs(qx)
    px = src.px.probs
    d0 = kl_divergence(qxa, px)
    bstar = ee - d0
    if bstar < -1e-12:
        raise Infeasible(f"ee={ee:.6g} is below the input-marginal divergence {d0:.6g}")
    bstar = max(bstar, 0.0)
    dmat = bhattacharyya_matrix(src.pygx)
    active = qxa > 0

    # pairs at infinite distance would make the objective infinite; remove
    # them up front and renormalize the product initialization
    allowed = np.isfinite(dmat)
    rows = np.where(allowed, qxa[None, :], 0.0)
    z = rows.sum(axis=1)
    if np.any(active & (z == 0)):
        raise Infeasible("an active input letter has no finite-distance partner")
    rows[active] /= z[active, None]
    rows[~active] = 1.0 / len(qxa)

    def b_of(lam, base):
        tilted = _tilted_rows(base, dmat, lam, active)
        return bhattacharyya_avg(qxa[:, None] * tilted, dmat)

    prev_obj = np.inf
    prev_joint = None
    joint = qxa[:, None] * rows
    lam = 0.0
    for k in range(1, cfg.max_outer_iters + 1):
        try:
            lam = bisect_monotone(lambda l: b_of(l, rows), bstar, (-1.0, 1.0), cfg, expand="both")
        except BracketFailure as exc:
            raise Infeasible(
                f"target distance {bstar:.6g} is not attainable: {exc}") from None
        rows = _tilted_rows(rows, dmat, lam, active)
        joint = map_lumping(qxa[:, None] * rows, qxa)
        col = joint.sum(axis=0)
        rows = np.full_like(joint, 1.0 / len(qxa))
        rs = joint.sum(axis=1)
        rows[active] = joint[active] / rs[active, None]
        obj = _div_to_vector(rows, col, qxa)
        # the mutual information alone flattens out well before the iterate
        # does, so also require the iterate itself to settle
        settled = prev_joint is not None and np.max(np.abs(joint - prev_joint)) < 1e-13
        delta = abs(prev_obj - obj)
        if delta < cfg.obj_tol and settled:
            return SolveResult(obj, joint, lam, k, True)
        prev_obj = obj
        prev_joint = joint
    raise NotConverged(f"v_ex made no progress below obj_tol in {cfg.max_outer_iters} iterations",
                       SolveResult(prev_obj, joint, lam, cfg.max_outer_iters, False), delta)


def e_rb(src: Source, r: float, er: float, t: float,
         cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Exponent trade-off value: minimum over priors within divergence er of
    the source prior, and over conditionals, of

        D(Q_X||P_X) + D(Q_{Y|X}||W|Q_X) + t*(r - H(Q_{X|Y}|Q_Y)).

    Alternating minimization with the prior step solved by a tilted prior
    whose multiplier is bisected onto the divergence cap when it binds.
    """
    if er < 0 or t < 0:
        raise ValueError("er and t must be non-negative")
    px = src.px.probs
    w = src.pygx.rows
    qy = px @ w
    alpha = 1.0 / (1.0 + t)
    prev = np.inf
    qbar = px
    lam = 0.0
    for k in range(1, cfg.max_outer_iters + 1):
        rows = _geometric_rows(w, qy, alpha)
        h1 = _row_divergences(rows, w)
        h2 = _row_divergences(rows, np.broadcast_to(qy, rows.shape))
        if er == 0.0:
            qbar = px
            lam = np.inf
        else:
            qbar = map_h(px, h1, h2, 0.0, t)
            if kl_divergence(qbar, px) <= er:
                lam = 0.0
            else:
                lam = bisect_monotone(
                    lambda l: kl_divergence(map_h(px, h1, h2, l, t), px),
                    er, (0.0, 1.0), cfg, expand="up")
                qbar = map_h(px, h1, h2, lam, t)
        qy = qbar @ rows
        joint = qbar[:, None] * rows
        h_back = float(-xlogx(joint).sum() + xlogx(qy).sum())
        obj = kl_divergence(qbar, px) + _avg_div(rows, w, qbar) + t * (r - h_back)
        delta = prev - obj
        if delta < cfg.obj_tol:
            return SolveResult(obj, joint, lam, k, True)
        prev = obj
    raise NotConverged(f"e_rb made no progress below obj_tol in {cfg.max_outer_iters} iterations",
                       SolveResult(prev, qbar, lam, cfg.max_outer_iters, False), delta)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex
    (sorting algorithm)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _eex_objective(s: np.ndarray, px: np.ndarray, dmat_f: np.ndarray,
                   r: float, t: float, mu: float) -> float:
    marg = s.sum(axis=1)
    d_marg = kl_divergence(marg, px)
    b = float(np.sum(np.where(s > 0, s * dmat_f, 0.0)))
    cond_ent = float(-xlogx(s).sum() + xlogx(marg).sum())
    return (1.0 + mu) * d_marg + b + t * (r - cond_ent)


def _eex_gradient(s: np.ndarray, px: np.ndarray, dmat_f: np.ndarray,
                  t: float, mu: float) -> np.ndarray:
    tiny = 1e-30
    row = s.sum(axis=1)
    col = s.sum(axis=0)
    lr = np.log(np.maximum(row, tiny))
    lc = np.log(np.maximum(col, tiny))
    lp = np.log(px)
    ls = np.log(np.maximum(s, tiny))
    # symmetric in (i, j): marginal terms are split between rows and columns
    g = 0.5 * (1.0 + mu) * ((lr - lp)[:, None] + (lc - lp)[None, :] + 2.0)
    g = g + dmat_f + t * (ls + 1.0) - 0.5 * t * ((lr + 1.0)[:, None] + (lc + 1.0)[None, :])
    return g


def e_ex(src: Source, r: float, er: float, t: float,
         cfg: SolverConfig = DEFAULT_CONFIG) -> SolveResult:
    """Expurgated exponent trade-off value: minimum over couplings with equal
    marginals within divergence er of the source prior, of

        D(Q_X||P_X) + B(Q) + t*(r - H(Q_X) + I(Q)).

    The problem is convex; it is solved by projected gradient with Armijo
    backtracking over symmetric couplings (which carry the equal-marginal
    constraint for free), with the divergence cap enforced through an outer
    multiplier bisection.
    """
    if er < 0:
        raise ValueError("er must be non-negative")
    if t < 1.0 - 1e-12:
        raise ValueError("t must be at least 1 for the expurgated branch")
    px = src.px.probs
    dmat = bhattacharyya_matrix(src.pygx)
    allowed = np.isfinite(dmat)
    dmat_f = np.where(allowed, dmat, 0.0)

    init = np.outer(px, px) * allowed
    tot = init.sum()
    if tot == 0:
        raise Infeasible("no finite-distance coupling exists")
    init = 0.5 * (init + init.T) / tot

    armijo = 1e-4
    state = {"iters": 0, "converged": True}

    def solve_inner(mu, start):
        s = start
        f = _eex_objective(s, px, dmat_f, r, t, mu)
        step = 1.0
        for it in range(cfg.max_outer_iters):
            g = _eex_gradient(s, px, dmat_f, t, mu)
            g = 0.5 * (g + g.T)
            moved = False
            while step > 1e-18:
                cand = s - step * g
                cand = np.where(allowed, cand, -np.inf)
                flat = _project_simplex(np.where(np.isfinite(cand.ravel()),
                                                 cand.ravel(), -1e30))
                s_new = 0.5 * (flat.reshape(s.shape) + flat.reshape(s.shape).T)
                s_new = np.where(allowed, s_new, 0.0)
                f_new = _eex_objective(s_new, px, dmat_f, r, t, mu)
                gain = float(np.sum(g * (s_new - s)))
                if f_new <= f + armijo * gain + 1e-15:
                    moved = True
                    break
                step *= 0.5
            state["iters"] += 1
            if not moved:
                return s, f
            decrease = f - f_new
            stalled = float(np.max(np.abs(s_new - s))) < 1e-15
            s, f = s_new, f_new
            step = min(step * 2.0, 1e3)
            if decrease < cfg.obj_tol or stalled:
                return s, f
        state["converged"] = False
        return s, f

    s0, f0 = solve_inner(0.0, init)
    d_at = kl_divergence(s0.sum(axis=1), px)
    if d_at <= er + 1e-12:
        if not state["converged"]:
            raise NotConverged("e_ex projected gradient stalled",
                               SolveResult(f0, s0, 0.0, state["iters"], False))
        return SolveResult(f0, s0, 0.0, state["iters"], True)

    # the divergence cap binds: drive D(marg||px) onto er by a monotone
    # multiplier search (secant step, bisection fallback), warm-starting
    # each solve from the previous coupling
    d_tol = max(1e-10, 1e-5 * er)
    lo, d_lo, s_lo = 0.0, d_at, s0
    hi, d_hi, s_hi = None, None, s0
    mu_probe, warm = 1.0, s0
    while hi is None:
        s_mu, _ = solve_inner(mu_probe, warm)
        warm = s_mu
        d_mu = kl_divergence(s_mu.sum(axis=1), px)
        if d_mu <= er:
            hi, d_hi, s_hi = mu_probe, d_mu, s_mu
        else:
            lo, d_lo, s_lo = mu_probe, d_mu, s_mu
            mu_probe *= 4.0
            if mu_probe > BRACKET_LIMIT:
                hi, d_hi, s_hi = mu_probe, d_mu, s_mu
                break
    mu, s_star, d_star = hi, s_hi, d_hi
    for _ in range(cfg.max_bisect_iters):
        if abs(d_star - er) <= d_tol or hi - lo < cfg.bisect_tol:
            break
        if d_lo > d_hi > 0:
            frac = (d_lo - er) / (d_lo - d_hi)
            frac = min(max(frac, 0.1), 0.9)
        else:
            frac = 0.5
        mu = lo + frac * (hi - lo)
        s_mu, _ = solve_inner(mu, s_star)
        d_mu = kl_divergence(s_mu.sum(axis=1), px)
        if abs(d_mu - er) < abs(d_star - er) or d_mu <= er:
            s_star, d_star = s_mu, d_mu
        if d_mu > er:
            lo, d_lo = mu, d_mu
        else:
            hi, d_hi = mu, d_mu
    value = _eex_objective(s_star, px, dmat_f, r, t, 0.0)
    if not state["converged"]:
        raise NotConverged("e_ex projected gradient stalled",
                           SolveResult(value, s_star, mu, state["iters"], False))
    return SolveResult(value, s_star, mu, state["iters"], True)
