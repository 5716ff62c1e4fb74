"""Choice of the number of top order statistics from estimator agreement."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import CensoredSample, DomainError, EstimatorId, TailView, _top_mean, sort_sample
from .registry import estimate_values


@dataclass(frozen=True)
class KPath:
    """Adapted estimates of one estimator along increasing ``k``."""

    estimator_id: EstimatorId
    k_values: np.ndarray
    estimates: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k_values, dtype=np.int64)
        est = np.asarray(self.estimates, dtype=float)
        if k.ndim != 1 or k.shape != est.shape:
            raise DomainError("k_values and estimates must be 1-d and of equal length")
        if k.size > 1 and np.any(np.diff(k) <= 0):
            raise DomainError("k_values must be strictly increasing")
        object.__setattr__(self, "estimator_id", EstimatorId.parse(self.estimator_id))
        object.__setattr__(self, "k_values", k)
        object.__setattr__(self, "estimates", est)

    def window(self, k_min: int, k_max: int) -> np.ndarray:
        """Estimates for every k in [k_min, k_max]; raises on a gap."""
        lo, hi = np.searchsorted(self.k_values, [k_min, k_max + 1])
        ks = self.k_values[lo:hi]
        if ks.size != k_max - k_min + 1:
            raise DomainError(f"path for {self.estimator_id.value} does not cover k = {k_min}..{k_max}")
        return self.estimates[lo:hi]


def estimate_paths(sample: CensoredSample, estimators: Sequence[str | EstimatorId], k_values, **options) -> list[KPath]:
    """Adapted estimates of every estimator on each k (NaN where undefined)."""
    eids = [EstimatorId.parse(e) for e in estimators]
    ks = np.asarray(k_values, dtype=np.int64)
    z_sorted, d_sorted = sort_sample(sample)
    out = np.empty((ks.size, len(eids)))
    with np.errstate(all="ignore"):
        for i, k in enumerate(ks):
            if not 1 <= k <= sample.n - 1:
                raise DomainError(f"k must lie in [1, {sample.n - 1}], got {k}")
            view = TailView(z_sorted, d_sorted, int(k), _top_mean(d_sorted, int(k)))
            out[i] = estimate_values(view, eids, **options)
    return [KPath(eid, ks, out[:, j]) for j, eid in enumerate(eids)]


def agreement_objective(paths: Sequence[KPath], k_min: int, k_max: int) -> tuple[np.ndarray, np.ndarray]:
    """``(k, sqrt(sum over unordered pairs of squared differences))``."""
    if len(paths) < 2:
        raise DomainError("k_opt needs at least two estimator paths")
    if k_min > k_max:
        raise DomainError(f"k_min={k_min} exceeds k_max={k_max}")
    est = np.stack([p.window(k_min, k_max) for p in paths])  # (P, K)
    P = est.shape[0]
    diff2 = sum(((est[i] - est[j]) ** 2 for i in range(P) for j in range(i + 1, P)), np.zeros(est.shape[1]))
    return np.arange(k_min, k_max + 1), np.sqrt(diff2)


def k_opt(paths: Sequence[KPath], k_min: int, k_max: int) -> int:
    """The k in [k_min, k_max] where the estimators agree most.

    Minimizes the root of the summed squared pairwise differences; NaN
    objective values are never selected, ties go to the smallest k.
    """
    ks, obj = agreement_objective(paths, k_min, k_max)
    if not np.isfinite(obj).any():
        raise DomainError("no k in the window where every estimator is defined")
    return int(ks[np.nanargmin(obj)])
