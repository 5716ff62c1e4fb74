"""Uniform dispatch from estimator identifiers to estimator functions."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from . import estimators as est
from .core import CensoredSample, DomainError, EstimatorId, EviEstimate, TailView, make_tail_view
from .regression import SecondOrderPair, erm, estimate_second_order


def _mvrb(view: TailView, second_order: SecondOrderPair | None = None, **_) -> EviEstimate:
    if second_order is None:
        try:
            second_order = estimate_second_order(view)
        except DomainError:
            # no usable (beta, rho): zero correction, i.e. Hill
            return est.mvrb(view, 0.0, -1.0)
    return est.mvrb(view, second_order.beta, second_order.rho)


def _ww_l(view: TailView, ww_variant: str = "as_printed", **_) -> EviEstimate:
    return est.ww_leurgans(view, variant=ww_variant)


_DISPATCH: dict[EstimatorId, Callable[..., EviEstimate]] = {
    EstimatorId.HILL: lambda v, **_: est.hill(v),
    EstimatorId.UH: lambda v, **_: est.generalized_hill(v),
    EstimatorId.ZIPF: lambda v, **_: est.zipf(v),
    EstimatorId.MVRB: _mvrb,
    EstimatorId.MOM: lambda v, **_: est.moment(v),
    EstimatorId.MOMR: lambda v, **_: est.moment_ratio(v),
    EstimatorId.PMOM: lambda v, **_: est.peng_moment(v),
    EstimatorId.ERM: lambda v, **_: erm(v),
    EstimatorId.POT: lambda v, **_: est.pot(v),
    EstimatorId.POT_L: lambda v, **_: est.pot_one_step(v),
    EstimatorId.WW_KM: lambda v, **_: est.ww_km(v),
    EstimatorId.WW_L: _ww_l,
}


def estimate(data: CensoredSample | TailView, estimator: str | EstimatorId, k: int | None = None, **options) -> EviEstimate:
    """Evaluate one estimator.

    ``data`` is either a sample (then ``k`` is required) or a prepared view.
    Options: ``second_order`` (a SecondOrderPair for MVRB) and
    ``ww_variant`` (``"as_printed"`` or ``"consecutive_spacings"``).
    """
    eid = EstimatorId.parse(estimator)
    if isinstance(data, CensoredSample):
        if k is None:
            raise DomainError("k is required when estimating from a sample")
        view = make_tail_view(data, k)
    else:
        view = data if k is None or k == data.k else data.with_k(k)
    return _DISPATCH[eid](view, **options)


def estimate_values(view: TailView, estimators: Iterable[EstimatorId], **options) -> np.ndarray:
    """Adapted estimates for several estimators; failures become NaN."""
    out = []
    for eid in estimators:
        try:
            out.append(_DISPATCH[eid](view, **options).adapted)
        except (DomainError, FloatingPointError, ZeroDivisionError):
            out.append(np.nan)
    return np.asarray(out, dtype=float)
