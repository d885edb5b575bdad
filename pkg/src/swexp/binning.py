"""Finite-blocklength type-dependent random-binning codec with maximum
likelihood and minimum-conditional-entropy decoders.

Encoding sends a block's type index and its bin index inside that type
class; the number of bins per type class is the ceiling of e^(n*rate).
Decoders score every block in the announced bin-within-type from integer
joint counts, so candidates with identical empirical statistics score
bit-identically and ties resolve to the lexicographically smallest block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge
from .probability import Source, TypeDescriptor, enumerate_types, log_type_probability

MAX_TABLE = 2**20
Z95 = 1.959963984540054
# stands in for log(0) in integer-count dot products, where a true -inf
# would turn impossible-but-zero-count cells into nan
LOG_ZERO = -1e18


@dataclass(frozen=True)
class SWCode:
    n: int
    x_size: int
    types: tuple
    rates: np.ndarray
    bin_counts: np.ndarray
    type_of_seq: np.ndarray
    bins: np.ndarray
    seed: int

    def type_index(self, counts: tuple) -> int:
        return self._type_lookup[counts]

    @property
    def _type_lookup(self):
        cache = getattr(self, "_lookup_cache", None)
        if cache is None:
            cache = {t.counts: i for i, t in enumerate(self.types)}
            object.__setattr__(self, "_lookup_cache", cache)
        return cache

    def header_rate(self, type_idx: int) -> float:
        """Rate in nats when the type-index header is charged to the block."""
        return (math.log(len(self.types)) + math.log(self.bin_counts[type_idx])) / self.n

    def members(self, type_idx: int, bin_idx: int) -> np.ndarray:
        """Sequence indices (ascending, i.e. lexicographic blocks) sharing a
        type class and a bin."""
        cache = getattr(self, "_members_cache", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_members_cache", cache)
        key = (type_idx, bin_idx)
        if key not in cache:
            by_type = getattr(self, "_seqs_by_type", None)
            if by_type is None:
                by_type = [np.flatnonzero(self.type_of_seq == i)
                           for i in range(len(self.types))]
                object.__setattr__(self, "_seqs_by_type", by_type)
            seqs = by_type[type_idx]
            cache[key] = seqs[self.bins[seqs] == bin_idx]
        return cache[key]


@dataclass(frozen=True)
class SimStats:
    trials: int
    errors: int
    p_hat: float
    ci95: float
    decoder: str


def _digits(idx: np.ndarray, n: int, base: int) -> np.ndarray:
    """Base-`base` digits of sequence indices, most significant first."""
    out = np.empty((idx.size, n), dtype=np.uint8)
    rem = idx.astype(np.int64)
    for pos in range(n - 1, -1, -1):
        out[:, pos] = rem % base
        rem //= base
    return out


def _seq_index(blocks: np.ndarray, base: int) -> np.ndarray:
    n = blocks.shape[-1]
    powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return blocks.astype(np.int64) @ powers


def build_code(src: Source, n: int, rate_fn, seed: int) -> SWCode:
    """Draw a random-binning code: every block of a type class gets an
    independent uniform bin among ceil(e^(n*rate)) bins for that class.

    ``rate_fn`` maps a TypeDescriptor to nats. Deterministic given the seed;
    bin assignment uses a stream independent from the one trial generation
    derives from the same seed.
    """
    x_size = src.x_size
    total = x_size**n
    if total > MAX_TABLE:
        raise TooLarge(f"|X|^n = {total} exceeds the explicit bin-table guard {MAX_TABLE}")
    types = tuple(enumerate_types(n, x_size))
    rates = np.array([float(rate_fn(t)) for t in types])
    if np.any(rates < 0):
        raise ValueError("rate function must be non-negative")
    bin_counts = np.ceil(np.exp(n * rates) - 1e-9).astype(np.int64)
    bin_counts = np.maximum(bin_counts, 1)

    digits = _digits(np.arange(total), n, x_size)
    counts = np.stack([(digits == a).sum(axis=1) for a in range(x_size)], axis=1)
    lookup = {t.counts: i for i, t in enumerate(types)}
    type_of_seq = np.array([lookup[tuple(row)] for row in counts], dtype=np.int32)

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    bins = np.zeros(total, dtype=np.int64)
    for i in range(len(types)):
        idx = np.flatnonzero(type_of_seq == i)
        bins[idx] = rng.integers(0, bin_counts[i], size=idx.size)
    return SWCode(n, x_size, types, rates, bin_counts, type_of_seq, bins, seed)


def encode(code: SWCode, x) -> tuple:
    """Map a block to (type index, bin index, rate in nats). The rate is the
    rate-function value of the block's type; the header surcharge for the
    type index is available separately via ``SWCode.header_rate``."""
    block = np.asarray(x, dtype=np.int64)
    if block.shape != (code.n,) or block.min() < 0 or block.max() >= code.x_size:
        raise ValueError("block must be a length-n vector over the source alphabet")
    idx = int(_seq_index(block, code.x_size))
    t = int(code.type_of_seq[idx])
    return t, int(code.bins[idx]), float(code.rates[t])


def _count_matrices(cands: np.ndarray, y: np.ndarray, x_size: int, y_size: int) -> np.ndarray:
    """Integer joint-count matrices of each candidate block against y,
    flattened to [num_cands, x_size*y_size]."""
    cells = cands.astype(np.int64) * y_size + y[None, :]
    m = cands.shape[0]
    offs = (np.arange(m, dtype=np.int64) * (x_size * y_size))[:, None]
    flat = np.bincount((cells + offs).ravel(), minlength=m * x_size * y_size)
    return flat.reshape(m, x_size * y_size)


def _ml_scores(counts: np.ndarray, logw_flat: np.ndarray) -> np.ndarray:
    return counts @ logw_flat


def _mce_scores(counts: np.ndarray, n: int, y_size: int) -> np.ndarray:
    """Empirical conditional entropy H(X|Y) per candidate (to minimize)."""
    cnt = counts.astype(float)
    y_marg = cnt.reshape(cnt.shape[0], -1, y_size).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cell_term = np.where(cnt > 0, cnt * np.log(np.where(cnt > 0, cnt, 1.0)), 0.0).sum(axis=1)
        y_term = np.where(y_marg > 0, y_marg * np.log(np.where(y_marg > 0, y_marg, 1.0)),
                          0.0).sum(axis=1)
    return (y_term - cell_term) / n


def _log_w(src: Source) -> np.ndarray:
    return np.where(src.pygx.rows > 0,
                    np.log(np.where(src.pygx.rows > 0, src.pygx.rows, 1.0)), LOG_ZERO)


def decode_ml(code: SWCode, src: Source, type_idx: int, bin_idx: int, y) -> np.ndarray:
    """Most likely bin member given the side information; lexicographic
    smallest block on exact ties."""
    yv = np.asarray(y, dtype=np.int64)
    members = code.members(type_idx, bin_idx)
    cands = _digits(members, code.n, code.x_size)
    counts = _count_matrices(cands, yv, code.x_size, src.y_size)
    scores = _ml_scores(counts, _log_w(src).ravel())
    return cands[int(np.argmax(scores))]


def decode_mce(code: SWCode, type_idx: int, bin_idx: int, y) -> np.ndarray:
    """Bin member with the smallest empirical conditional entropy given the
    side information; uses no knowledge of the source statistics."""
    yv = np.asarray(y, dtype=np.int64)
    members = code.members(type_idx, bin_idx)
    cands = _digits(members, code.n, code.x_size)
    y_size = int(yv.max()) + 1 if yv.size else 1
    counts = _count_matrices(cands, yv, code.x_size, max(y_size, 2))
    scores = _mce_scores(counts, code.n, max(y_size, 2))
    return cands[int(np.argmin(scores))]


def _draw_pairs(src: Source, n: int, trials: int, rng) -> tuple:
    xs = rng.choice(src.x_size, size=(trials, n), p=src.px.probs)
    ys = np.empty_like(xs)
    for a in range(src.x_size):
        mask = xs == a
        ys[mask] = rng.choice(src.y_size, size=int(mask.sum()), p=src.pygx.rows[a])
    return xs, ys


def estimate_error(src: Source, code: SWCode, decoder: str, trials: int, seed: int) -> SimStats:
    """Monte-Carlo error probability of the codec under i.i.d. source pairs,
    with a Wilson 95% confidence half-width."""
    if decoder not in ("ml", "mce"):
        raise ValueError("decoder must be 'ml' or 'mce'")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 1)))
    xs, ys = _draw_pairs(src, code.n, trials, rng)
    idx = _seq_index(xs, code.x_size)
    tb = code.type_of_seq[idx].astype(np.int64) * (code.bins.max() + 1) + code.bins[idx]
    order = np.argsort(tb, kind="stable")
    logw_flat = _log_w(src).ravel()
    errors = 0
    start = 0
    while start < trials:
        stop = start
        key = tb[order[start]]
        while stop < trials and tb[order[stop]] == key:
            stop += 1
        sel = order[start:stop]
        t = int(code.type_of_seq[idx[sel[0]]])
        b = int(code.bins[idx[sel[0]]])
        members = code.members(t, b)
        cands = _digits(members, code.n, code.x_size)
        if members.size == 1:
            errors += int(np.sum(members[0] != idx[sel]))
            start = stop
            continue
        chunk = max(1, 4_000_000 // (members.size * code.n))
        for c0 in range(0, sel.size, chunk):
            block = sel[c0:c0 + chunk]
            yb = ys[block]
            cells = cands[:, None, :].astype(np.int64) * src.y_size + yb[None, :, :]
            m, k = cands.shape[0], block.size
            offs = (np.arange(m * k, dtype=np.int64)
                    * (code.x_size * src.y_size)).reshape(m, k, 1)
            counts = np.bincount((cells + offs).ravel(),
                                 minlength=m * k * code.x_size * src.y_size)
            counts = counts.reshape(m, k, code.x_size * src.y_size)
            if decoder == "ml":
                scores = counts @ logw_flat
                win = np.argmax(scores, axis=0)
            else:
                sc = _mce_scores(counts.reshape(m * k, -1), code.n, src.y_size)
                win = np.argmin(sc.reshape(m, k), axis=0)
            errors += int(np.sum(members[win] != idx[block]))
        start = stop
    return SimStats(trials, errors, errors / trials, wilson_ci(errors, trials), decoder)


def exact_error(src: Source, code: SWCode, decoder: str) -> float:
    """Error probability of the given (fixed) code computed by exhaustive
    summation over all source/side-information pairs."""
    if decoder not in ("ml", "mce"):
        raise ValueError("decoder must be 'ml' or 'mce'")
    n = code.n
    total_x = code.x_size**n
    total_y = src.y_size**n
    if total_x * total_y > 2**26:
        raise TooLarge("exhaustive error computation guard exceeded")
    all_y = _digits(np.arange(total_y), n, src.y_size)
    logw_flat = _log_w(src).ravel()
    logpx = np.log(src.px.probs)
    p_err = 0.0
    for t in range(len(code.types)):
        for b in range(int(code.bin_counts[t])):
            members = code.members(t, b)
            if members.size == 0:
                continue
            cands = _digits(members, n, code.x_size)
            m = members.size
            cells = cands[:, None, :].astype(np.int64) * src.y_size + all_y[None, :, :]
            offs = (np.arange(m * total_y, dtype=np.int64)
                    * (code.x_size * src.y_size)).reshape(m, total_y, 1)
            counts = np.bincount((cells + offs).ravel(),
                                 minlength=m * total_y * code.x_size * src.y_size)
            counts = counts.reshape(m, total_y, code.x_size * src.y_size)
            if decoder == "ml":
                win = np.argmax(counts @ logw_flat, axis=0)
            else:
                sc = _mce_scores(counts.reshape(m * total_y, -1), n, src.y_size)
                win = np.argmin(sc.reshape(m, total_y), axis=0)
            # P(x) P(y|x) summed where the winner is not the sender
            log_py_gx = counts @ logw_flat  # [m, total_y] log prob of y given each member
            for j in range(m):
                wrong = win != j
                if not np.any(wrong):
                    continue
                lp = logpx[cands[j]].sum() + log_py_gx[j][wrong]
                p_err += float(np.exp(lp).sum())
    return p_err


def exact_excess_rate(src: Source, code: SWCode, r: float) -> float:
    """P(rate of the source block >= r), exactly, by summing type
    probabilities over types whose rate reaches r."""
    total = 0.0
    for i, t in enumerate(code.types):
        if code.rates[i] >= r:
            total += math.exp(log_type_probability(src.px, t))
    return min(total, 1.0)


def wilson_ci(errors: int, trials: int) -> float:
    p_hat = errors / trials
    denom = 1.0 + Z95**2 / trials
    return Z95 * math.sqrt(p_hat * (1.0 - p_hat) / trials + Z95**2 / (4.0 * trials**2)) / denom
