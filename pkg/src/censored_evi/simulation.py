"""Monte Carlo study of point estimates and bootstrap intervals.

Each repetition draws a censored sample, computes every requested estimator
at ``k = floor(k_fraction * n)`` and a percentile interval from the
conditional block bootstrap.  Across repetitions the study reports the
median absolute deviation, the median bias, the coverage probability and
the average interval length.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .bootstrap import UnstableBootstrapError, bootstrap_replicates, percentile_interval
from .core import TABLE_ORDER, DomainError, EstimatorId, k_from_fraction, make_tail_view
from .distributions import CensoringScheme, TailModel, derive_seed, generate_censored
from .registry import estimate_values

COLUMNS = ("estimator", "MAD", "MedBias", "CP", "L", "failures")


@dataclass(frozen=True)
class StudyConfig:
    """Design of one table cell.

    ``ww_variant`` selects the WW_L formula used in the study; the
    consecutive-spacings form is the default here because it is the one
    that reduces to Hill without censoring.
    ``length_stat`` chooses mean or median of the interval lengths.
    """

    model: TailModel
    target_p: float
    n: int = 1000
    k_fraction: float = 0.10
    estimators: tuple[EstimatorId, ...] = TABLE_ORDER
    R: int = 200
    B: int = 200
    alpha: float = 0.05
    d: int = 1
    seed: int = 0
    ww_variant: str = "consecutive_spacings"
    length_stat: Literal["mean", "median"] = "mean"

    def __post_init__(self):
        object.__setattr__(self, "estimators", tuple(EstimatorId.parse(e) for e in self.estimators))
        if int(self.R) != self.R or self.R < 1:
            raise DomainError("R must be a positive integer")
        if int(self.B) != self.B or self.B < 2:
            raise DomainError("B must be an integer >= 2")
        if not 0 < self.k_fraction < 1:
            raise DomainError("k_fraction must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not 0 < self.target_p < 1:
            raise DomainError("censoring proportion must lie in (0, 1)")
        if self.length_stat not in ("mean", "median"):
            raise DomainError("length_stat must be 'mean' or 'median'")

    @property
    def gamma1(self) -> float:
        return self.model.gamma

    @property
    def k(self) -> int:
        return k_from_fraction(self.k_fraction, self.n)


@dataclass(frozen=True)
class EstimatorMetrics:
    estimator: EstimatorId
    mad: float
    med_bias: float
    coverage: float
    avg_length: float
    failures: int

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.coverage)


@dataclass(frozen=True)
class StudyMetrics:
    config: StudyConfig
    rows: tuple[EstimatorMetrics, ...]
    # per repetition: point estimates, lower and upper bounds, shape (R, E)
    point: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def __getitem__(self, estimator) -> EstimatorMetrics:
        eid = EstimatorId.parse(estimator)
        for row in self.rows:
            if row.estimator == eid:
                return row
        raise KeyError(eid.value)


def _repetition(config: StudyConfig, r: int) -> np.ndarray:
    """(3, E) array: point estimate, lower and upper bound (NaN on failure)."""
    scheme = CensoringScheme.for_model(config.model, config.target_p)
    sample = generate_censored(config.model, scheme, config.n, derive_seed(config.seed, r, 0))
    k = config.k
    E = len(config.estimators)
    out = np.full((3, E), np.nan)
    opts = {"ww_variant": config.ww_variant}
    with np.errstate(all="ignore"):
        try:
            view = make_tail_view(sample, k)
        except DomainError:
            return out
        out[0] = estimate_values(view, config.estimators, **opts)
    try:
        reps = bootstrap_replicates(
            sample, config.estimators, k, config.B, config.d, derive_seed(config.seed, r, 1), **opts
        )
    except DomainError:
        return out
    for e in range(E):
        if not np.isfinite(out[0, e]):
            continue
        try:
            ci = percentile_interval(reps[:, e], config.alpha)
        except UnstableBootstrapError:
            out[0, e] = np.nan
            continue
        out[1, e], out[2, e] = ci.lower, ci.upper
    return out


def _summarize(eid: EstimatorId, gamma1: float, point, lower, upper, length_stat: str) -> EstimatorMetrics:
    ok = np.isfinite(point) & np.isfinite(lower) & np.isfinite(upper)
    failures = int(ok.size - ok.sum())
    if not ok.any():
        return EstimatorMetrics(eid, math.nan, math.nan, math.nan, math.nan, failures)
    err = point[ok] - gamma1
    covered = int(np.count_nonzero((lower[ok] <= gamma1) & (gamma1 <= upper[ok])))
    lengths = upper[ok] - lower[ok]
    avg = float(np.mean(lengths) if length_stat == "mean" else np.median(lengths))
    return EstimatorMetrics(
        eid, float(np.median(np.abs(err))), float(np.median(err)), covered / int(ok.sum()), avg, failures
    )


def run_study(config: StudyConfig, workers: int = 1) -> StudyMetrics:
    """Run ``config.R`` repetitions and aggregate per estimator.

    Repetition ``r`` draws its sample from stream ``(seed, r, 0)`` and its
    bootstrap from ``(seed, r, 1)``, so results do not depend on ``workers``.
    Repetitions where an estimator fails (point estimate or unstable
    bootstrap) are excluded from that estimator's statistics and counted.
    """
    rs = range(int(config.R))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_repetition, [config] * len(rs), rs))
    else:
        results = [_repetition(config, r) for r in rs]
    arr = np.stack(results)  # (R, 3, E)
    point, lower, upper = arr[:, 0], arr[:, 1], arr[:, 2]
    rows = tuple(
        _summarize(eid, config.gamma1, point[:, e], lower[:, e], upper[:, e], config.length_stat)
        for e, eid in enumerate(config.estimators)
    )
    return StudyMetrics(config, _table_sorted(rows), point, lower, upper)


def _table_sorted(rows: Sequence[EstimatorMetrics]) -> tuple[EstimatorMetrics, ...]:
    rank = {eid: i for i, eid in enumerate(TABLE_ORDER)}
    return tuple(sorted(rows, key=lambda row: rank[row.estimator]))


def _row_values(row: EstimatorMetrics) -> list:
    return [row.estimator.value, row.mad, row.med_bias, row.coverage, row.avg_length, row.failures]


def emit_table(metrics: StudyMetrics | Sequence[EstimatorMetrics], format: str = "text") -> str:
    """Render rows in table order as ``csv``, ``json`` or aligned ``text``.

    Floats are written with ``repr`` precision in csv and json so a parse
    gives back identical values; failed rows carry NaN.
    """
    rows = _table_sorted(metrics.rows if isinstance(metrics, StudyMetrics) else metrics)
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in _row_values(row)])
        return buf.getvalue()
    if format == "json":
        records = [dict(zip(COLUMNS, _row_values(row))) for row in rows]
        for rec in records:
            for key, val in rec.items():
                if isinstance(val, float) and not math.isfinite(val):
                    rec[key] = None
        return json.dumps(records, indent=2) + "\n"
    if format == "text":
        lines = [f"{'':<7}{'MAD':>8}{'MedBias':>9}{'CP':>6}{'L':>7}{'fail':>6}"]
        for row in rows:
            lines.append(
                f"{row.estimator.value:<7}{row.mad:>8.3f}{row.med_bias:>9.3f}"
                f"{row.coverage:>6.2f}{row.avg_length:>7.2f}{row.failures:>6d}"
            )
        return "\n".join(lines) + "\n"
    raise DomainError(f"unknown format {format!r}")


def parse_csv_table(text: str) -> list[EstimatorMetrics]:
    """Inverse of ``emit_table(..., 'csv')``."""
    reader = csv.DictReader(io.StringIO(text))
    return [
        EstimatorMetrics(
            EstimatorId.parse(rec["estimator"]), float(rec["MAD"]), float(rec["MedBias"]),
            float(rec["CP"]), float(rec["L"]), int(rec["failures"]),
        )
        for rec in reader
    ]
