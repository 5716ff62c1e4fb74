"""Conditional block bootstrap for censored samples and percentile intervals.

Blocks are built so that each holds ``d`` observations of the rarer
censoring class (censored or noncensored) and the rest from the other
class; resampling whole blocks then guarantees both classes in every
bootstrap sample, which rules out the completely censored and completely
noncensored cases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    CensoredSample,
    DegenerateSampleError,
    DomainError,
    EstimatorId,
    TailView,
    _check_k,
    _top_mean,
)
from .distributions import derive_seed, make_rng
from .registry import estimate_values


class UnstableBootstrapError(RuntimeError):
    """Too many bootstrap replicates failed to produce an estimate."""

    def __init__(self, message: str, dropped: int, replicates: int):
        super().__init__(message)
        self.dropped = dropped
        self.replicates = replicates


MAX_DROP_FRACTION = 0.05


@dataclass(frozen=True)
class BlockPlan:
    d: int
    s: int
    m: int
    blocks: tuple[np.ndarray, ...]
    minority_censored: bool

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)


@dataclass(frozen=True)
class IntervalEstimate:
    lower: float
    upper: float
    level: float
    replicates: int
    method: str = "percentile"
    dropped: int = 0
    point: float = math.nan

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def plan_blocks(sample: CensoredSample, d: int = 1, seed: int = 0) -> BlockPlan:
    """Randomly partition the sample into blocks anchored on the rarer class.

    Block size ``s = ceil(n d / n_minority)``, block count ``m = ceil(n / s)``;
    the first ``m - 1`` blocks have size ``s`` and the last one holds the
    remaining observations.  Each block holds ``d`` minority observations,
    or more when the majority class is too small to fill the rest.
    """
    if int(d) != d or d < 1:
        raise DomainError("d must be a positive integer")
    censored = np.flatnonzero(sample.delta == 0)
    observed = np.flatnonzero(sample.delta == 1)
    if censored.size == 0 or observed.size == 0:
        kind = "noncensored" if censored.size == 0 else "censored"
        raise DegenerateSampleError(f"every observation is {kind}; the conditional bootstrap needs both classes")
    minority_censored = censored.size <= observed.size
    minority, majority = (censored, observed) if minority_censored else (observed, censored)
    if minority.size < d:
        raise DomainError(f"d={d} exceeds the {minority.size} minority-class observations")
    n = sample.n
    s = math.ceil(n * d / minority.size)
    m = math.ceil(n / s)
    counts = _minority_counts(n, minority.size, d, s, m)
    rng = make_rng(seed)
    minority = rng.permutation(minority)
    majority = rng.permutation(majority)
    sizes = np.full(m, s)
    sizes[-1] = n - (m - 1) * s
    mi = np.concatenate(([0], np.cumsum(counts)))
    ma = np.concatenate(([0], np.cumsum(sizes - counts)))
    blocks = [np.concatenate((minority[mi[i]:mi[i + 1]], majority[ma[i]:ma[i + 1]])) for i in range(m)]
    for b in blocks:
        b.setflags(write=False)
    return BlockPlan(int(d), s, m, tuple(blocks), minority_censored)


def _minority_counts(n: int, n_min: int, d: int, s: int, m: int) -> np.ndarray:
    """Minority observations per block.

    Every block gets ``d`` (the last one at most what is left).  When the
    majority class cannot fill the ``s - d`` remaining slots of every block,
    the surplus minority observations are dealt round-robin to blocks that
    still keep at least one majority slot, then to any block with room.
    """
    sizes = np.full(m, s)
    sizes[-1] = n - (m - 1) * s
    counts = np.minimum(d, sizes)
    counts[-1] = min(counts[-1], n_min - (m - 1) * d)
    left = n_min - int(counts.sum())
    for floor in (1, 0):
        while left > 0:
            room = np.flatnonzero(sizes - counts > floor)
            if room.size == 0:
                break
            take = room[:left]
            counts[take] += 1
            left -= take.size
    return counts


def _resample_indices(plan: BlockPlan, delta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    sizes = np.array(plan.sizes)
    # enough draws to reach n even if only the smallest block were drawn
    draws_needed = math.ceil(n / sizes.min())
    for _ in range(1000):
        picks = rng.integers(0, plan.m, size=draws_needed)
        cum = np.cumsum(sizes[picks])
        used = int(np.searchsorted(cum, n)) + 1
        idx = np.concatenate([plan.blocks[p] for p in picks[:used]])[:n]
        flags = delta[idx]
        if flags.min() == 0 and flags.max() == 1:
            return idx
    raise DegenerateSampleError("could not draw a bootstrap sample containing both classes")


def resample(plan: BlockPlan, sample: CensoredSample, seed: int) -> CensoredSample:
    """Draw blocks with replacement until the size reaches n, truncate to n."""
    idx = _resample_indices(plan, sample.delta, sample.n, make_rng(seed))
    return CensoredSample(sample.z[idx], sample.delta[idx])


def bootstrap_replicates(
    sample: CensoredSample,
    estimators: Sequence[str | EstimatorId],
    k: int,
    B: int,
    d: int = 1,
    seed: int = 0,
    **options,
) -> np.ndarray:
    """(B, len(estimators)) array of adapted estimates on bootstrap samples.

    The block plan uses stream ``(seed, 0)``, replicate ``b`` the stream
    ``(seed, 1, b)``.  Failed replicates are NaN.
    """
    if int(B) != B or B < 2:
        raise DomainError("B must be an integer >= 2")
    _check_k(k, sample.n)
    eids = [EstimatorId.parse(e) for e in estimators]
    plan = plan_blocks(sample, d, seed=_stream_seed(seed, 0))
    out = np.empty((int(B), len(eids)))
    z, delta = sample.z, sample.delta
    for b in range(int(B)):
        idx = _resample_indices(plan, delta, sample.n, make_rng(seed, 1, b))
        zb, db = z[idx], delta[idx]
        order = np.argsort(zb, kind="stable")
        zs, ds = zb[order], db[order]
        view = TailView(zs, ds, k, _top_mean(ds, k))
        with np.errstate(all="ignore"):
            out[b] = estimate_values(view, eids, **options)
    return out


def _stream_seed(seed: int, stream: int) -> int:
    return derive_seed(seed, stream)


def percentile_interval(values: np.ndarray, alpha: float, max_drop: float = MAX_DROP_FRACTION) -> IntervalEstimate:
    """Percentile interval from replicate values (NaN = failed replicate).

    Quantiles use linear interpolation between order statistics (type 7).
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    values = np.asarray(values, dtype=float)
    B = values.size
    ok = values[np.isfinite(values)]
    dropped = B - ok.size
    if dropped > max_drop * B or ok.size < 2:
        raise UnstableBootstrapError(
            f"{dropped} of {B} bootstrap replicates failed (limit {max_drop:.0%})", dropped, B
        )
    lo, hi = np.quantile(ok, [alpha / 2, 1 - alpha / 2])
    return IntervalEstimate(float(lo), float(hi), 1 - alpha, B, "percentile", dropped)


def bootstrap_ci(
    sample: CensoredSample,
    estimator_id: str | EstimatorId | Callable[[TailView], float],
    k: int,
    B: int = 1000,
    alpha: float = 0.05,
    d: int = 1,
    seed: int = 0,
    **options,
) -> IntervalEstimate:
    """Percentile bootstrap interval for gamma_1 from the conditional block
    bootstrap.  ``estimator_id`` may also be a callable mapping a tail view
    to a number."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if callable(estimator_id) and not isinstance(estimator_id, (str, EstimatorId)):
        values = _callable_replicates(sample, estimator_id, k, B, d, seed)
    else:
        values = bootstrap_replicates(sample, [estimator_id], k, B, d, seed, **options)[:, 0]
    return percentile_interval(values, alpha)


def _callable_replicates(sample, statistic, k, B, d, seed) -> np.ndarray:
    if int(B) != B or B < 2:
        raise DomainError("B must be an integer >= 2")
    _check_k(k, sample.n)
    plan = plan_blocks(sample, d, seed=_stream_seed(seed, 0))
    out = np.empty(int(B))
    for b in range(int(B)):
        idx = _resample_indices(plan, sample.delta, sample.n, make_rng(seed, 1, b))
        zb, db = sample.z[idx], sample.delta[idx]
        order = np.argsort(zb, kind="stable")
        view = TailView(zb[order], db[order], k, _top_mean(db[order], k))
        try:
            out[b] = float(statistic(view))
        except (DomainError, ZeroDivisionError):
            out[b] = np.nan
    return out
