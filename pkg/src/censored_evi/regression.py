"""Exponential regression model for log-spacings and second-order parameters.

Scaled log-spacings ``R_j = j (log Z_{n-j+1,n} - log Z_{n-j,n})`` are
approximately exponential with mean ``gamma + b (j/(k+1))^(-rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import CensoredSample, DomainError, EstimatorId, EviEstimate, TailView, adapt_to_censoring, sort_sample

RHO_GRID = np.round(np.arange(-4.0, -0.0499, 0.05), 2)


class SecondOrderError(DomainError):
    """(beta, rho) could not be estimated from the sample."""


@dataclass(frozen=True)
class ErmFit:
    gamma: float
    b: float
    rho: float
    loglik: float
    converged: bool
    grid_rho_used: float


@dataclass(frozen=True)
class SecondOrderPair:
    beta: float
    rho: float
    k1: int


def log_spacings(view: TailView) -> np.ndarray:
    if np.any(view.z_sorted <= 0):
        raise DomainError("log-spacings need positive observations")
    desc = view.z_sorted[::-1][: view.k + 1]
    lg = np.log(desc)
    j = np.arange(1, view.k + 1)
    return j * (lg[:-1] - lg[1:])


# Profile parametrization: m_j = gamma (1 + phi x_j / x_k), phi > PHI_MIN.
# For fixed phi the gamma MLE is mean(R_j / (1 + phi x_j/x_k)).  Bounding
# phi away from -1 keeps every mean >= 1% of gamma, so a zero spacing
# (tied order statistics) cannot drive the likelihood to infinity.
PHI_MIN = -0.99
PHI_GRID = np.concatenate((-np.geomspace(-PHI_MIN, 1e-3, 16), [0.0], np.geomspace(1e-3, 1e4, 36)))


def _profile_terms(R: np.ndarray, xr: np.ndarray, phi: np.ndarray):
    """Profile log-likelihood and its first two phi-derivatives.

    ``xr`` holds x_j / x_k with shape (G, k); ``phi`` has shape (G,).
    """
    k = R.size
    q = 1.0 / (1.0 + phi[:, None] * xr)
    Rq = R * q
    g = Rq.mean(1)
    g1 = -(Rq * xr * q).mean(1)
    g2 = 2 * (Rq * (xr * q) ** 2).mean(1)
    xq = xr * q
    ll = -k * np.log(g) + np.log(q).sum(1) - k
    d1 = -k * g1 / g - xq.sum(1)
    d2 = -k * (g2 / g - (g1 / g) ** 2) + (xq * xq).sum(1)
    return ll, d1, d2, g


@lru_cache(maxsize=16)
def _design(k: int, rhos: tuple[float, ...]):
    """Data-free pieces of the profile likelihood for a given k and rho grid."""
    j = np.arange(1, k + 1)
    x = (j / (k + 1))[None, :] ** (-np.asarray(rhos)[:, None])  # (G, k)
    xk = x[:, -1]
    xr = x / xk[:, None]
    q = 1.0 / (1.0 + PHI_GRID[None, :, None] * xr[:, None, :])  # (G, F, k)
    logq = np.log(q).sum(2)
    for a in (xk, xr, q, logq):
        a.setflags(write=False)
    return xk, xr, q, logq


def _fit_grid(R: np.ndarray, rhos: np.ndarray, tol: float, max_iter: int):
    """Maximize the exponential likelihood in (gamma, b) for every rho."""
    k = R.size
    xk, xr, q, logq = _design(k, tuple(float(r) for r in rhos))
    ll_grid = -k * np.log(q @ (R / k)) + logq - k
    f = np.argmax(ll_grid, axis=1)
    rows = np.arange(rhos.size)
    best_phi = PHI_GRID[f]
    best_ll = ll_grid[rows, f]
    lo = PHI_GRID[np.maximum(f - 1, 0)]
    hi = PHI_GRID[np.minimum(f + 1, PHI_GRID.size - 1)]
    phi = best_phi.copy()
    converged = np.zeros(rhos.size, dtype=bool)
    for _ in range(max_iter):
        ll, d1, d2, _ = _profile_terms(R, xr, phi)
        lo = np.where(d1 > 0, phi, lo)
        hi = np.where(d1 > 0, hi, phi)
        newton = phi - d1 / np.where(d2 < 0, d2, -1.0)
        use_newton = (d2 < 0) & (newton > lo) & (newton < hi)
        nxt = np.where(use_newton, newton, 0.5 * (lo + hi))
        step = np.abs(nxt - phi)
        phi = np.where(converged, phi, nxt)  # the last small step is still taken
        converged |= (step < tol * (1 + np.abs(phi))) | (hi - lo < tol * (1 + np.abs(phi)))
        if converged.all():
            break
    for _ in range(2):  # guarded Newton polish down to rounding level
        ll, d1, d2, _ = _profile_terms(R, xr, phi)
        polish = phi - d1 / np.where(d2 < 0, d2, -np.inf)
        small = np.abs(polish - phi) <= 1e-6 * (1 + np.abs(phi))
        phi = np.where((d2 < 0) & small & (polish > PHI_MIN), polish, phi)
    ll, _, _, _ = _profile_terms(R, xr, phi)
    # keep the refined point unless it lost to its grid start beyond rounding
    worse = ll < best_ll - 1e-10 * np.abs(best_ll)
    best_phi = np.where(worse, best_phi, phi)
    ll, _, _, gamma = _profile_terms(R, xr, best_phi)
    b = best_phi / xk * gamma
    return gamma, b, ll, converged


def fit_erm(
    view: TailView,
    rho_grid: np.ndarray = RHO_GRID,
    b_zero: bool = False,
    tol: float = 1e-9,
    max_iter: int = 500,
) -> ErmFit:
    """Maximum-likelihood fit of the exponential regression model.

    ``rho`` ranges over ``rho_grid``; for each grid value ``(gamma, b)`` is
    fitted, and the best likelihood wins (ties go to the ``b`` closest to 0,
    then to grid order).  With ``b_zero=True`` the model reduces to
    ``R_j ~ gamma E_j`` whose MLE is the Hill estimator.
    """
    if view.k < 3:
        raise DomainError("ERM needs k >= 3")
    R = log_spacings(view)
    if b_zero:
        g = float(R.mean())
        if not g > 0:
            raise DomainError("ERM: all log-spacings are zero")
        ll = float(-R.size * math.log(g) - R.sum() / g)
        return ErmFit(g, 0.0, float(rho_grid[-1]), ll, True, float(rho_grid[-1]))
    if not R.mean() > 0:
        raise DomainError("ERM: all log-spacings are zero")
    rhos = np.asarray(rho_grid, dtype=float)
    gamma, b, ll, conv = _fit_grid(R, rhos, tol, max_iter)
    ok = np.isfinite(ll) & (gamma > 0)
    if not ok.any():
        g = float(R.mean())
        ll_h = float(-R.size * math.log(g) - R.sum() / g)
        return ErmFit(g, 0.0, float(rhos[-1]), ll_h, False, float(rhos[-1]))
    best = np.max(ll[ok])
    tied = ok & (ll >= best - 1e-12 * max(1.0, abs(best)))
    cand = np.flatnonzero(tied)
    i = int(cand[np.argmin(np.abs(b[cand]))])
    return ErmFit(float(gamma[i]), float(b[i]), float(rhos[i]), float(ll[i]), bool(conv[i]), float(rhos[i]))


def erm(view: TailView, **kwargs) -> EviEstimate:
    fit = fit_erm(view, **kwargs)
    raw = fit.gamma
    return EviEstimate(
        EstimatorId.ERM, view.k, raw, adapt_to_censoring(raw, view),
        {"b": fit.b, "rho": fit.rho, "converged": float(fit.converged)},
    )


def _second_order_sorted(z_sorted: np.ndarray) -> SecondOrderPair:
    n = z_sorted.size
    if n < 100:
        raise DomainError(f"second-order estimation needs n >= 100, got {n}")
    k1 = int(math.floor(n**0.995))
    k1 = min(k1, n - 1)
    desc = np.log(z_sorted[::-1][: k1 + 1])
    e = desc[:k1] - desc[k1]
    m1, m2, m3 = (float(np.mean(e**p)) for p in (1, 2, 3))
    if not (m1 > 0 and m2 > 0 and m3 > 0):
        raise SecondOrderError("second-order estimation: nonpositive log-moments")
    num = math.log(m1) - 0.5 * math.log(m2 / 2)
    den = 0.5 * math.log(m2 / 2) - math.log(m3 / 6) / 3
    if den == 0:
        raise SecondOrderError("second-order estimation: zero denominator in T")
    T = num / den
    if not math.isfinite(T) or T == 3:
        raise SecondOrderError(f"second-order estimation failed (T={T})")
    rho = -abs(3 * (T - 1) / (T - 3))
    if not rho < 0 or not math.isfinite(rho):
        raise SecondOrderError(f"second-order estimation gave rho={rho}")
    # beta: scaled log-spacings regression at level k1 given rho
    i = np.arange(1, k1 + 1)
    U = i * (desc[:k1] - desc[1 : k1 + 1])
    t = i / k1

    def d(a):
        return float(np.mean(t ** (-a)))

    def D(a):
        return float(np.mean(t ** (-a) * U))

    dr = d(rho)
    den_b = dr * D(rho) - D(2 * rho)
    if den_b == 0:
        raise SecondOrderError("second-order estimation: zero denominator in beta")
    beta = (k1 / n) ** rho * (dr * D(0.0) - D(rho)) / den_b
    if not math.isfinite(beta):
        raise SecondOrderError("second-order estimation: non-finite beta")
    return SecondOrderPair(float(beta), float(rho), k1)


def estimate_second_order(sample: CensoredSample | TailView) -> SecondOrderPair:
    """(beta, rho) of the Z sample at level k1 = floor(n^0.995).

    rho uses the three-moment ratio statistic
    ``T = (log M1 - log(M2/2)/2) / (log(M2/2)/2 - log(M3/6)/3)`` with
    ``rho = -|3(T-1)/(T-3)|``.  beta is the scaled log-spacings estimator
    ``(k/n)^rho (d(rho) D(0) - D(rho)) / (d(rho) D(rho) - D(2 rho))`` where
    ``d(a) = mean (i/k)^-a`` and ``D(a) = mean (i/k)^-a U_i``.
    """
    if isinstance(sample, TailView):
        return _second_order_sorted(sample.z_sorted)
    z_sorted, _ = sort_sample(sample)
    return _second_order_sorted(z_sorted)
