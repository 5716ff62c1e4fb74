"""Censored-sample data model, tail views and the censoring adaptation.

Observations are pairs ``(z, delta)`` with ``z = min(X, C)`` and
``delta = 1`` when the event was seen (``X <= C``), ``0`` when censored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np


class DomainError(ValueError):
    """Input outside the domain of an estimator or operation."""


class FullyCensoredTailError(DomainError):
    """Every observation among the top k is censored, so p_hat = 0."""


class DegenerateSampleError(DomainError):
    """Sample has only censored or only noncensored observations."""


class EstimatorId(str, Enum):
    HILL = "Hill"
    UH = "UH"
    ZIPF = "Zipf"
    MVRB = "MVRB"
    MOM = "MOM"
    MOMR = "MomR"
    PMOM = "PMom"
    ERM = "ERM"
    POT = "POT"
    POT_L = "POT_L"
    WW_KM = "WW_KM"
    WW_L = "WW_L"

    @classmethod
    def parse(cls, name: "str | EstimatorId") -> "EstimatorId":
        """Case-insensitive lookup accepting dotted names
        (``POT.L``, ``WW.KM``) as well as ``wwkm``-style CLI spellings."""
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace(".", "").replace("_", "").replace("-", "")
        for member in cls:
            if member.value.lower().replace("_", "") == key:
                return member
        raise DomainError(f"unknown estimator {name!r}")


# Row order of the simulation tables.
TABLE_ORDER = (
    EstimatorId.HILL,
    EstimatorId.MVRB,
    EstimatorId.ZIPF,
    EstimatorId.UH,
    EstimatorId.WW_KM,
    EstimatorId.WW_L,
    EstimatorId.MOM,
    EstimatorId.MOMR,
    EstimatorId.PMOM,
    EstimatorId.POT,
    EstimatorId.POT_L,
    EstimatorId.ERM,
)

# Estimators that handle censoring themselves and skip the p_hat divisor.
NATIVELY_ADAPTED = frozenset({EstimatorId.WW_KM, EstimatorId.WW_L, EstimatorId.POT_L})


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CensoredSample:
    """Paired observations ``(z_i, delta_i)``, i = 1..n."""

    z: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).ravel()
        delta = np.asarray(self.delta).ravel()
        if z.size == 0:
            raise DomainError("sample must contain at least one observation")
        if z.shape != delta.shape:
            raise DomainError(f"z has {z.size} values but delta has {delta.size}")
        if not np.all(np.isfinite(z)):
            raise DomainError("all z must be finite")
        if np.any(z <= 0):
            raise DomainError("all z must be > 0")
        if not np.all((delta == 0) | (delta == 1)):
            raise DomainError("delta must be 0 or 1")
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "delta", _frozen(delta.astype(np.int8)))

    @classmethod
    def from_records(cls, records: Iterable[tuple[float, int]]) -> "CensoredSample":
        records = list(records)
        if not records:
            raise DomainError("sample must contain at least one observation")
        z, delta = zip(*records)
        return cls(np.asarray(z, dtype=float), np.asarray(delta))

    @property
    def n(self) -> int:
        return int(self.z.size)

    @property
    def records(self) -> list[tuple[float, int]]:
        return [(float(a), int(b)) for a, b in zip(self.z, self.delta)]

    @property
    def n_censored(self) -> int:
        return int(self.n - self.delta.sum())

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other):
        if not isinstance(other, CensoredSample):
            return NotImplemented
        return np.array_equal(self.z, other.z) and np.array_equal(self.delta, other.delta)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TailView:
    """Ascending order statistics with their censoring flags and a threshold
    index ``k``; ``Z_{n-k,n}`` is the threshold."""

    z_sorted: np.ndarray
    delta_sorted: np.ndarray
    k: int
    p_hat: float

    @property
    def n(self) -> int:
        return int(self.z_sorted.size)

    @property
    def threshold(self) -> float:
        """Z_{n-k,n}."""
        return float(self.z_sorted[self.n - self.k - 1])

    @property
    def top(self) -> np.ndarray:
        """Z_{n-j+1,n} for j = 1..k (descending)."""
        return self.z_sorted[self.n - self.k:][::-1]

    @property
    def top_delta(self) -> np.ndarray:
        return self.delta_sorted[self.n - self.k:][::-1]

    @property
    def log_excesses(self) -> np.ndarray:
        """log Z_{n-j+1,n} - log Z_{n-k,n}, j = 1..k."""
        return np.log(self.top) - math.log(self.threshold)

    def with_k(self, k: int) -> "TailView":
        """Same order statistics, different threshold index."""
        _check_k(k, self.n)
        return TailView(self.z_sorted, self.delta_sorted, k, _top_mean(self.delta_sorted, k))

    def to_sample(self) -> CensoredSample:
        return CensoredSample(self.z_sorted, self.delta_sorted)


@dataclass(frozen=True)
class EviEstimate:
    estimator_id: EstimatorId
    k: int
    raw: float
    adapted: float
    aux: Mapping[str, float] = field(default_factory=dict)


def _check_k(k: int, n: int) -> None:
    if int(k) != k or not 1 <= k <= n - 1:
        raise DomainError(f"k must be an integer in [1, n-1] = [1, {n - 1}], got {k}")


def _top_mean(delta_sorted: np.ndarray, k: int) -> float:
    # integer sum over k: exact top-k mean of the flags
    return int(delta_sorted[delta_sorted.size - k:].sum()) / k


def sort_sample(sample: CensoredSample) -> tuple[np.ndarray, np.ndarray]:
    """Stable ascending sort; tied z keep input order and their own flags."""
    order = np.argsort(sample.z, kind="stable")
    return _frozen(sample.z[order]), _frozen(sample.delta[order])


def make_tail_view(sample: CensoredSample, k: int) -> TailView:
    _check_k(k, sample.n)
    z_sorted, delta_sorted = sort_sample(sample)
    return TailView(z_sorted, delta_sorted, int(k), _top_mean(delta_sorted, int(k)))


def k_from_fraction(fraction: float, n: int) -> int:
    """``floor(fraction * n)``, validated against ``[1, n-1]``."""
    if not 0 < fraction < 1:
        raise DomainError(f"k fraction must lie in (0, 1), got {fraction}")
    k = math.floor(fraction * n)
    _check_k(k, n)
    return k


def adapt_to_censoring(raw: float, view: TailView) -> float:
    """Divide a complete-sample estimate by the noncensored proportion."""
    if view.p_hat <= 0:
        raise FullyCensoredTailError(
            f"all of the top k={view.k} observations are censored; gamma_1 cannot be estimated"
        )
    return raw / view.p_hat


def censoring_path(sample: CensoredSample) -> tuple[np.ndarray, np.ndarray]:
    """(k, p_hat(k)) for k = 1..n-1."""
    _, delta_sorted = sort_sample(sample)
    n = sample.n
    if n < 2:
        raise DomainError("need at least two observations for a censoring path")
    ks = np.arange(1, n)
    top_counts = np.cumsum(delta_sorted[::-1].astype(np.int64))[: n - 1]
    return ks, top_counts / ks
