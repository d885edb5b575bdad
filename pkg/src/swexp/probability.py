"""Probability vectors, conditional distributions, information measures, and
exact method-of-types combinatorics.

All information quantities are in nats. The conventions 0*ln(0) = 0 and
0*ln(0/0) = 0 apply throughout. Probabilities are kept in the linear
domain; type-class combinatorics go through log-gamma so blocklengths of a
few hundred do not overflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SupportMismatch, TooLarge, ValidationError

PMF_ATOL = 1e-12


def _as_readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def xlogx(p: np.ndarray) -> np.ndarray:
    """Elementwise p*ln(p) with 0*ln(0) = 0."""
    out = np.zeros_like(p, dtype=float)
    mask = p > 0
    out[mask] = p[mask] * np.log(p[mask])
    return out


def xlogy(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise p*ln(q) with 0*ln(anything) = 0."""
    out = np.zeros_like(p, dtype=float)
    mask = p > 0
    out[mask] = p[mask] * np.log(q[mask])
    return out


@dataclass(frozen=True)
class Pmf:
    """A probability vector over a finite alphabet of size >= 2."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_readonly(self.probs))
        p = self.probs
        if p.ndim != 1 or p.size < 2:
            raise ValueError("pmf must be a vector over an alphabet of size >= 2")
        if np.any(p < 0):
            raise ValueError("pmf entries must be non-negative")
        if abs(float(p.sum()) - 1.0) > PMF_ATOL:
            raise ValueError(f"pmf entries sum to {p.sum()!r}, not 1")

    @property
    def alphabet_size(self) -> int:
        return self.probs.size

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


@dataclass(frozen=True)
class CondPmf:
    """A row-stochastic matrix: one output pmf per input letter."""

    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _as_readonly(self.rows))
        m = self.rows
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 2:
            raise ValueError("conditional pmf must be a matrix with >= 2 columns")
        if np.any(m < 0):
            raise ValueError("conditional pmf entries must be non-negative")
        bad = np.abs(m.sum(axis=1) - 1.0) > PMF_ATOL
        if np.any(bad):
            raise ValueError(f"rows {np.flatnonzero(bad).tolist()} do not sum to 1")

    @property
    def in_size(self) -> int:
        return self.rows.shape[0]

    @property
    def out_size(self) -> int:
        return self.rows.shape[1]

    def row(self, x: int) -> np.ndarray:
        return self.rows[x]


@dataclass(frozen=True)
class JointPmf:
    """A joint probability matrix over a product alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_readonly(self.probs))
        m = self.probs
        if m.ndim != 2:
            raise ValueError("joint pmf must be a matrix")
        if np.any(m < 0):
            raise ValueError("joint pmf entries must be non-negative")
        if abs(float(m.sum()) - 1.0) > PMF_ATOL:
            raise ValueError(f"joint pmf entries sum to {m.sum()!r}, not 1")

    def marginal_x(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.probs.sum(axis=0)


@dataclass(frozen=True)
class Source:
    """A memoryless pair source: an input pmf and a forward channel.

    The input pmf must have full support, and the channel must not be
    noiseless (some output letter reachable from two input letters),
    otherwise side information would determine the input and every
    rate/exponent question degenerates.
    """

    px: Pmf
    pygx: CondPmf

    def __post_init__(self):
        if self.pygx.in_size != self.px.alphabet_size:
            raise ValueError("channel row count must match input alphabet size")
        if np.any(self.px.probs <= 0):
            raise ValueError("input pmf must have full support")
        w = self.pygx.rows
        overlap = w[:, None, :] * w[None, :, :]
        i, j = np.triu_indices(w.shape[0], k=1)
        if not np.any(overlap[i, j] > 0):
            raise ValueError("channel is noiseless: no output letter is shared by two inputs")

    @property
    def x_size(self) -> int:
        return self.px.alphabet_size

    @property
    def y_size(self) -> int:
        return self.pygx.out_size

    def joint(self) -> JointPmf:
        return JointPmf(self.px.probs[:, None] * self.pygx.rows)


@dataclass(frozen=True)
class TypeDescriptor:
    """Empirical-count vector of a length-n block."""

    n: int
    counts: tuple

    def __post_init__(self):
        if self.n < 1 or any(c < 0 for c in self.counts):
            raise ValueError("blocklength and counts must be non-negative, n >= 1")
        if sum(self.counts) != self.n:
            raise ValueError("counts must sum to the blocklength")

    def pmf(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


def entropy(p: Pmf | np.ndarray) -> float:
    """Shannon entropy in nats."""
    arr = p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)
    return float(-xlogx(arr).sum())


def kl_divergence(q: Pmf | np.ndarray, p: Pmf | np.ndarray) -> float:
    """D(q||p) in nats; raises SupportMismatch when supp(q) is not in supp(p)."""
    qa = q.probs if isinstance(q, Pmf) else np.asarray(q, dtype=float)
    pa = p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)
    if np.any((qa > 0) & (pa == 0)):
        raise SupportMismatch("first argument puts mass outside the support of the second")
    mask = qa > 0
    return float(np.sum(qa[mask] * (np.log(qa[mask]) - np.log(pa[mask]))))


def cond_divergence(q: CondPmf | np.ndarray, p: CondPmf | np.ndarray,
                    qx: Pmf | np.ndarray) -> float:
    """Average divergence sum_x qx(x) D(q(.|x)||p(.|x)); rows with qx(x)=0 are skipped."""
    qm = q.rows if isinstance(q, CondPmf) else np.asarray(q, dtype=float)
    pm = p.rows if isinstance(p, CondPmf) else np.asarray(p, dtype=float)
    w = qx.probs if isinstance(qx, Pmf) else np.asarray(qx, dtype=float)
    total = 0.0
    for x in np.flatnonzero(w > 0):
        try:
            total += w[x] * kl_divergence(qm[x], pm[x])
        except SupportMismatch as exc:
            raise SupportMismatch(f"row {x}: {exc}") from None
    return total


def mutual_information(qx: Pmf | np.ndarray, qygx: CondPmf | np.ndarray) -> float:
    """I(X;Y) of the joint qx x qygx, in nats."""
    w = qx.probs if isinstance(qx, Pmf) else np.asarray(qx, dtype=float)
    m = qygx.rows if isinstance(qygx, CondPmf) else np.asarray(qygx, dtype=float)
    qy = w @ m
    active = w > 0
    return float(np.sum(w[active, None] * (xlogx(m[active])
                                           - xlogy(m[active], np.broadcast_to(qy, m[active].shape)))))


def backward_cond_entropy(qx: Pmf | np.ndarray, qygx: CondPmf | np.ndarray) -> float:
    """H(X|Y) of the joint qx x qygx, in nats."""
    return entropy(qx) - mutual_information(qx, qygx)


def joint_entropy_backward(joint: np.ndarray) -> float:
    """H(X|Y) of a raw joint matrix (rows indexed by X)."""
    qy = joint.sum(axis=0)
    return float(-xlogx(joint).sum() + xlogx(qy).sum())


def bhattacharyya_matrix(w: CondPmf | np.ndarray) -> np.ndarray:
    """Pairwise Bhattacharyya distances -ln sum_y sqrt(w(y|x) w(y|x')).

    Symmetric with a zero diagonal; +inf where two rows have disjoint
    supports.
    """
    m = w.rows if isinstance(w, CondPmf) else np.asarray(w, dtype=float)
    s = np.sqrt(m)
    overlap = s @ s.T
    with np.errstate(divide="ignore"):
        d = -np.log(overlap)
    d[d < 0] = 0.0  # guard tiny negative values from rounding at overlap ~ 1
    np.fill_diagonal(d, 0.0)
    return d


def bhattacharyya_avg(qxx: JointPmf | np.ndarray, dmat: np.ndarray) -> float:
    """Expected Bhattacharyya distance of a coupling; +inf when the coupling
    puts mass on a pair at infinite distance."""
    q = qxx.probs if isinstance(qxx, JointPmf) else np.asarray(qxx, dtype=float)
    if q.shape != dmat.shape:
        raise ValueError("coupling and distance matrix shapes differ")
    inf_mask = np.isinf(dmat)
    if np.any(q[inf_mask] > 0):
        return math.inf
    return float(np.sum(np.where(q > 0, q * np.where(inf_mask, 0.0, dmat), 0.0)))


def enumerate_types(n: int, k: int) -> list[TypeDescriptor]:
    """All compositions of n into k parts, i.e. all types of blocklength n."""
    count = math.comb(n + k - 1, k - 1)
    if count > 10**7:
        raise TooLarge(f"{count} types exceeds the enumeration guard of 1e7")
    out = []

    def rec(prefix, remaining, parts_left):
        if parts_left == 1:
            out.append(TypeDescriptor(n, prefix + (remaining,)))
            return
        for c in range(remaining + 1):
            rec(prefix + (c,), remaining - c, parts_left - 1)

    rec((), n, k)
    return out


def log_type_class_size(t: TypeDescriptor) -> float:
    """Exact ln of the multinomial coefficient n! / prod counts!."""
    return math.lgamma(t.n + 1) - sum(math.lgamma(c + 1) for c in t.counts)


def log_type_probability(p: Pmf | np.ndarray, t: TypeDescriptor) -> float:
    """Exact ln P(X^n lands in the type class of t) under i.i.d. draws from p."""
    pa = p.probs if isinstance(p, Pmf) else np.asarray(p, dtype=float)
    if len(t.counts) != pa.size:
        raise ValueError("type and pmf alphabet sizes differ")
    ll = log_type_class_size(t)
    for c, px in zip(t.counts, pa):
        if c == 0:
            continue
        if px == 0:
            raise SupportMismatch("type puts counts on a zero-probability letter")
        ll += c * math.log(px)
    return ll


def load_source(path: str) -> Source:
    """Read a source from JSON: {"px": [...], "pygx": [[...], ...]}.

    Validation failures carry the offending field path.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ValidationError(path, f"cannot read file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(path, f"invalid JSON: {exc}") from None
    return source_from_dict(raw)


def source_from_dict(raw: dict) -> Source:
    if not isinstance(raw, dict):
        raise ValidationError("$", "top-level value must be an object")
    for key in ("px", "pygx"):
        if key not in raw:
            raise ValidationError(key, "missing required field")
    px_raw = raw["px"]
    if not isinstance(px_raw, list) or not all(isinstance(v, (int, float)) for v in px_raw):
        raise ValidationError("px", "must be a list of numbers")
    try:
        px = Pmf(np.asarray(px_raw, dtype=float))
    except ValueError as exc:
        raise ValidationError("px", str(exc)) from None
    rows_raw = raw["pygx"]
    if not isinstance(rows_raw, list) or len(rows_raw) != len(px_raw):
        raise ValidationError("pygx", f"must be a list of {len(px_raw)} rows")
    for i, row in enumerate(rows_raw):
        if not isinstance(row, list) or not all(isinstance(v, (int, float)) for v in row):
            raise ValidationError(f"pygx[{i}]", "must be a list of numbers")
        if len(row) != len(rows_raw[0]):
            raise ValidationError(f"pygx[{i}]", "rows must all have the same length")
    try:
        pygx = CondPmf(np.asarray(rows_raw, dtype=float))
    except ValueError as exc:
        raise ValidationError("pygx", str(exc)) from None
    try:
        return Source(px, pygx)
    except ValueError as exc:
        raise ValidationError("$", str(exc)) from None
