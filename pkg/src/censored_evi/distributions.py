"""Heavy-tailed models used in the simulation study, with same-family
censoring calibrated to a target right-tail censoring proportion.

Random streams come from numpy's PCG64 seeded through ``SeedSequence``
with entropy ``(seed, *stream_ids)``, so every (seed, stream) pair gives an
independent, reproducible generator regardless of call order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import CensoredSample, DomainError

Family = Literal["burr", "pareto", "frechet"]


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


def derive_seed(seed: int, *stream: int) -> int:
    """A 64-bit child seed for stream ``(seed, *stream)``."""
    lo, hi = np.random.SeedSequence([int(seed), *map(int, stream)]).generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def open_uniforms(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniforms strictly inside (0, 1) on a 2^-53 lattice."""
    return (rng.integers(0, 2**53, size=n, dtype=np.int64) + 0.5) / 2.0**53


@dataclass(frozen=True)
class TailModel:
    """Burr(eta, tau, lam): 1-F = (eta/(eta+z^tau))^lam, gamma = 1/(tau*lam).
    Pareto(alpha): 1-F = z^-alpha on z > 1.  Frechet(alpha): 1-F =
    1-exp(-z^-alpha) on z > 0.  For the last two gamma = 1/alpha."""

    family: Family
    params: tuple[float, ...]

    def __post_init__(self):
        expected = {"burr": 3, "pareto": 1, "frechet": 1}
        if self.family not in expected:
            raise DomainError(f"unknown family {self.family!r}")
        if len(self.params) != expected[self.family]:
            raise DomainError(f"{self.family} takes {expected[self.family]} parameter(s)")
        if not all(p > 0 and math.isfinite(p) for p in self.params):
            raise DomainError("all model parameters must be positive and finite")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def burr(cls, eta: float, tau: float, lam: float) -> "TailModel":
        return cls("burr", (eta, tau, lam))

    @classmethod
    def pareto(cls, alpha: float) -> "TailModel":
        return cls("pareto", (alpha,))

    @classmethod
    def frechet(cls, alpha: float) -> "TailModel":
        return cls("frechet", (alpha,))

    @property
    def gamma(self) -> float:
        if self.family == "burr":
            _, tau, lam = self.params
            return 1.0 / (tau * lam)
        return 1.0 / self.params[0]

    def with_gamma(self, gamma: float) -> "TailModel":
        """Same family (and for Burr the same eta, tau) with EVI ``gamma``."""
        if not gamma > 0:
            raise DomainError("gamma must be > 0")
        if self.family == "burr":
            eta, tau, _ = self.params
            return TailModel.burr(eta, tau, 1.0 / (tau * gamma))
        return TailModel(self.family, (1.0 / gamma,))

    def survival(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.family == "burr":
            eta, tau, lam = self.params
            return (eta / (eta + z**tau)) ** lam
        (alpha,) = self.params
        if self.family == "pareto":
            return np.where(z > 1, z ** (-alpha), 1.0)
        return -np.expm1(-(z ** (-alpha)))

    def quantile(self, u) -> np.ndarray | float:
        ua = np.asarray(u, dtype=float)
        if np.any((ua <= 0) | (ua >= 1)):
            raise DomainError("quantile level must lie in (0, 1)")
        if self.family == "burr":
            eta, tau, lam = self.params
            # overflow to inf only for censoring laws with enormous gamma
            with np.errstate(over="ignore"):
                out = (eta * np.expm1(-np.log1p(-ua) / lam)) ** (1.0 / tau)
        elif self.family == "pareto":
            out = np.exp(-np.log1p(-ua) / self.params[0])
        else:
            out = (-np.log(ua)) ** (-1.0 / self.params[0])
        return float(out) if np.ndim(out) == 0 else out


def sample(model: TailModel, n: int, seed: int) -> np.ndarray:
    """Inverse-transform draws; identical output for identical (model, n, seed)."""
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    return model.quantile(open_uniforms(make_rng(seed), int(n)))


@dataclass(frozen=True)
class CensoringScheme:
    """Censoring law of the same family as X, with
    ``gamma2 = gamma1 (1 - p) / p`` so that the censored share of the far
    tail, ``gamma1 / (gamma1 + gamma2)``, equals ``target_p``."""

    target_p: float
    censor_model: TailModel

    @classmethod
    def for_model(cls, model: TailModel, target_p: float) -> "CensoringScheme":
        if not 0 < target_p < 1:
            raise DomainError(f"censoring proportion must lie in (0, 1), got {target_p}")
        gamma2 = model.gamma * (1.0 - target_p) / target_p
        return cls(float(target_p), model.with_gamma(gamma2))


def generate_censored(model: TailModel, scheme: CensoringScheme, n: int, seed: int) -> CensoredSample:
    if model.family != scheme.censor_model.family:
        raise DomainError(
            f"censoring family {scheme.censor_model.family!r} differs from {model.family!r}"
        )
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    rng = make_rng(seed)
    x = model.quantile(open_uniforms(rng, int(n)))
    c = scheme.censor_model.quantile(open_uniforms(rng, int(n)))
    return CensoredSample(np.minimum(x, c), (x <= c).astype(np.int8))


def study_model(name: str, gamma1: float) -> TailModel:
    """Models of the simulation tables by EVI.

    ``burr`` is Burr(1, 2, 1/(2 gamma1)); ``lomax`` is the shifted Pareto
    (1+z)^(-1/gamma1), i.e. Burr(1, 1, 1/gamma1), which unlike the strict
    Pareto has a second-order term; ``pareto`` and ``frechet`` take
    alpha = 1/gamma1.
    """
    name = name.lower()
    if not gamma1 > 0:
        raise DomainError("gamma1 must be > 0")
    if name == "burr":
        return TailModel.burr(1.0, 2.0, 1.0 / (2.0 * gamma1))
    if name == "lomax":
        return TailModel.burr(1.0, 1.0, 1.0 / gamma1)
    if name in ("pareto", "frechet"):
        return TailModel(name, (1.0 / gamma1,))
    raise DomainError(f"unknown distribution {name!r}")
