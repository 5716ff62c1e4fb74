"""Extreme value index estimators for randomly right-censored samples.

Complete-sample estimators (Hill, UH, Zipf, MVRB, MOM, MomR, PMom, POT) are
computed on the observed ``Z`` order statistics and divided by the
noncensored proportion ``p_hat`` of the top ``k``.  WW.KM, WW.L and POT.L
account for censoring themselves.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import minimize_scalar

from .core import (
    CensoredSample,
    DomainError,
    EstimatorId,
    EviEstimate,
    TailView,
    adapt_to_censoring,
    sort_sample,
)


class KaplanMeierDegenerateError(DomainError):
    """A Kaplan-Meier survival value used as a denominator is zero."""


class OneStepError(DomainError):
    """The one-step Newton update for the censored GPD likelihood failed."""

    def __init__(self, message: str, initial: tuple[float, float]):
        super().__init__(message)
        self.initial = initial


def _adapted(eid: EstimatorId, view: TailView, raw: float, **aux: float) -> EviEstimate:
    if not math.isfinite(raw):
        raise DomainError(f"{eid.value}: non-finite estimate at k={view.k}")
    return EviEstimate(eid, view.k, float(raw), float(adapt_to_censoring(raw, view)), aux)


# -- closed-form estimators -------------------------------------------------


def hill(view: TailView) -> EviEstimate:
    raw = float(np.mean(view.log_excesses))
    return _adapted(EstimatorId.HILL, view, raw)


def _hill_path(z_sorted: np.ndarray, kmax: int) -> np.ndarray:
    """Hill statistic H_j for j = 1..kmax."""
    n = z_sorted.size
    logs_desc = np.log(z_sorted[::-1][: kmax + 1])
    j = np.arange(1, kmax + 1)
    return np.cumsum(logs_desc[:kmax]) / j - logs_desc[1 : kmax + 1]


def generalized_hill(view: TailView) -> EviEstimate:
    """UH estimator: slope of the generalized Pareto quantile plot."""
    n, k = view.n, view.k
    if k > n - 2:
        raise DomainError(f"UH needs k <= n-2 (uses Z_(n-k-1)), got k={k}, n={n}")
    H = _hill_path(view.z_sorted, k + 1)
    # UH_j = Z_{n-j,n} * H_j
    uh = view.z_sorted[::-1][1 : k + 2] * H
    if np.any(uh <= 0):
        j = int(np.argmax(uh <= 0)) + 1
        raise DomainError(f"UH: nonpositive term UH_{j} (tied top order statistics)")
    log_uh = np.log(uh)
    raw = float(np.mean(log_uh[:k]) - log_uh[k])
    return _adapted(EstimatorId.UH, view, raw)


def zipf(view: TailView) -> EviEstimate:
    k = view.k
    if k < 2:
        raise DomainError("Zipf needs k >= 2")
    j = np.arange(1, k + 1)
    w = np.log((k + 1) / (j + 1))
    wbar = w.mean()
    denom = np.mean(w * w) - wbar * wbar
    if denom <= 0:
        raise DomainError("Zipf: zero regression denominator")
    raw = float(np.mean((w - wbar) * np.log(view.top)) / denom)
    return _adapted(EstimatorId.ZIPF, view, raw)


def mvrb(view: TailView, beta: float, rho: float) -> EviEstimate:
    if not rho < 0:
        raise DomainError(f"MVRB needs rho < 0, got {rho}")
    h = float(np.mean(view.log_excesses))
    raw = h * (1.0 - beta / (1.0 - rho) * (view.k / view.n) ** (-rho))
    return _adapted(EstimatorId.MVRB, view, raw, beta=beta, rho=rho)


def log_moments(view: TailView, orders=(1, 2)) -> tuple[float, ...]:
    """M^(j) = mean of (log Z_{n-i+1,n} - log Z_{n-k,n})^j."""
    e = view.log_excesses
    return tuple(float(np.mean(e**j)) for j in orders)


def _moment_parts(view: TailView) -> tuple[float, float, float]:
    if view.k < 2:
        raise DomainError("moment-type estimators need k >= 2")
    m1, m2 = log_moments(view)
    if m2 <= 0 or m1 * m1 == m2:
        raise DomainError("moment-type estimators: degenerate log-excesses")
    # shared second term of MOM and PMom
    tail_term = 1.0 - 0.5 / (1.0 - m1 * m1 / m2)
    return m1, m2, tail_term


def moment(view: TailView) -> EviEstimate:
    m1, _, t = _moment_parts(view)
    return _adapted(EstimatorId.MOM, view, m1 + t)


def moment_ratio(view: TailView) -> EviEstimate:
    m1, m2, _ = _moment_parts(view)
    return _adapted(EstimatorId.MOMR, view, 0.5 * m2 / m1)


def peng_moment(view: TailView) -> EviEstimate:
    m1, m2, t = _moment_parts(view)
    return _adapted(EstimatorId.PMOM, view, 0.5 * m2 / m1 + t)


# -- Kaplan-Meier ---------------------------------------------------------


@dataclass(frozen=True)
class KaplanMeierCurve:
    """Right-continuous product-limit survival curve.

    ``survival[i]`` is the value at ``jump_points[i]``; ``left_limits[i]``
    the value just below it.
    """

    jump_points: np.ndarray
    survival: np.ndarray
    left_limits: np.ndarray

    def __call__(self, b) -> np.ndarray | float:
        """Survival at ``b`` (value after every observation <= b)."""
        idx = np.searchsorted(self.jump_points, b, side="right")
        out = np.concatenate(([1.0], self.survival))[idx]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, b) -> np.ndarray | float:
        """Survival just below ``b``."""
        idx = np.searchsorted(self.jump_points, b, side="left")
        out = np.concatenate(([1.0], self.survival))[idx]
        return float(out) if np.ndim(out) == 0 else out


def _km_from_sorted(z_sorted: np.ndarray, delta_sorted: np.ndarray, which: str) -> KaplanMeierCurve:
    n = z_sorted.size
    j = np.arange(1, n + 1)
    events = delta_sorted if which == "F" else 1 - delta_sorted
    factors = np.where(events == 1, (n - j) / (n - j + 1), 1.0)
    steps = np.cumprod(factors)
    # collapse ties: the curve value at a jump point is the value after the
    # last tied observation, its left limit the value before the first
    jumps, first = np.unique(z_sorted, return_index=True)
    last = np.append(first[1:], n) - 1
    before = np.concatenate(([1.0], steps))[first]
    return KaplanMeierCurve(jumps, steps[last], before)


def km_survival(sample: CensoredSample, which: Literal["F", "G"] = "F") -> KaplanMeierCurve:
    """Kaplan-Meier estimate of 1-F (events are noncensored) or 1-G
    (events are censored)."""
    if which not in ("F", "G"):
        raise DomainError(f"which must be 'F' or 'G', got {which!r}")
    z_sorted, delta_sorted = sort_sample(sample)
    return _km_from_sorted(z_sorted, delta_sorted, which)


def _ww_terms(view: TailView) -> tuple[float, np.ndarray, np.ndarray]:
    n, k = view.n, view.k
    surv_f = _km_from_sorted(view.z_sorted, view.delta_sorted, "F")
    surv_g = _km_from_sorted(view.z_sorted, view.delta_sorted, "G")
    tail_f = surv_f(view.threshold)
    if tail_f <= 0:
        raise KaplanMeierDegenerateError(
            f"1-F_hat(Z_(n-k,n)) = 0 at k={k} (threshold tied with the sample maximum)"
        )
    top, dtop = view.top, view.top_delta
    g_left = surv_g.left_limit(top)
    bad = (dtop == 1) & (g_left <= 0)
    if np.any(bad):
        j = int(np.argmax(bad)) + 1
        raise KaplanMeierDegenerateError(f"1-G_hat(Z_(n-j+1,n)-) = 0 for j={j} (order statistic {n - j + 1})")
    weights = np.where(dtop == 1, 1.0 / np.where(g_left > 0, g_left, 1.0), 0.0)
    return n * tail_f, weights, top


def ww_km(view: TailView, sample: CensoredSample | None = None) -> EviEstimate:
    """Kaplan-Meier weighted Hill estimator (WW.KM).

    ``sample`` is accepted for symmetry with the other censoring-aware
    estimators; the view already holds every order statistic.
    """
    scale, weights, top = _ww_terms(view)
    raw = float(np.sum(weights * np.log(top / view.threshold)) / scale)
    return EviEstimate(EstimatorId.WW_KM, view.k, raw, raw, {})


def ww_leurgans(
    view: TailView,
    sample: CensoredSample | None = None,
    variant: Literal["as_printed", "consecutive_spacings"] = "as_printed",
) -> EviEstimate:
    """Leurgans synthetic-data variant (WW.L).

    ``as_printed`` weights ``j * log(Z_{n-j+1,n}/Z_{n-k,n})``;
    ``consecutive_spacings`` weights ``j * log(Z_{n-j+1,n}/Z_{n-j,n})``,
    which reduces to Hill without censoring.
    """
    scale, weights, top = _ww_terms(view)
    j = np.arange(1, view.k + 1)
    if variant == "as_printed":
        logs = np.log(top / view.threshold)
    elif variant == "consecutive_spacings":
        logs = np.log(top) - np.log(view.z_sorted[::-1][1 : view.k + 1])
    else:
        raise DomainError(f"unknown WW.L variant {variant!r}")
    raw = float(np.sum(weights * j * logs) / scale)
    return EviEstimate(EstimatorId.WW_L, view.k, raw, raw, {"variant_consecutive": float(variant != "as_printed")})


# -- generalized Pareto likelihood ----------------------------------------

_SERIES_U = 1e-3
_N = np.arange(0, 10)
_G0 = (-1.0) ** _N / (_N + 1)
_G1 = ((-1.0) ** _N * _N / (_N + 1))[1:]
_G2 = ((-1.0) ** _N * _N * (_N - 1) / (_N + 1))[2:]


def _g_funcs(u: np.ndarray):
    """g(u) = log1p(u)/u with first and second derivatives."""
    small = np.abs(u) < _SERIES_U
    us = np.where(small, u, 0.0)
    g_s = np.polynomial.polynomial.polyval(us, _G0)
    g1_s = np.polynomial.polynomial.polyval(us, _G1)
    g2_s = np.polynomial.polynomial.polyval(us, _G2)
    ul = np.where(small, 1.0, u)
    h = np.log1p(ul)
    g_l = h / ul
    g1_l = 1.0 / (ul * (1 + ul)) - h / ul**2
    g2_l = -(1 + 2 * ul) / (ul**2 * (1 + ul) ** 2) - 1.0 / (ul**2 * (1 + ul)) + 2 * h / ul**3
    return (np.where(small, g_s, g_l), np.where(small, g1_s, g1_l), np.where(small, g2_s, g2_l))


def gpd_loglik_derivatives(gamma: float, sigma: float, v: np.ndarray, delta: np.ndarray | None = None):
    """Censored GPD log-likelihood with gradient and Hessian in (gamma, sigma).

    Noncensored excesses contribute the log density, censored ones the log
    survival function.  Returns ``(loglik, grad, hess)``; ``loglik`` is
    ``-inf`` outside the support ``1 + gamma*v/sigma > 0``.
    """
    v = np.asarray(v, dtype=float)
    d = np.ones_like(v) if delta is None else np.asarray(delta, dtype=float)
    a, s = float(gamma), float(sigma)
    x = v / s
    u = a * x
    if s <= 0 or np.any(1 + u <= 0):
        return -math.inf, np.full(2, np.nan), np.full((2, 2), np.nan)
    g, g1, g2 = _g_funcs(u)
    # F = log1p(a x)/a = x g(u): the -log survival of every excess
    F = x * g
    F_a = x * x * g1
    F_x = g + u * g1
    F_aa = x**3 * g2
    F_ax = 2 * x * g1 + x * u * g2
    F_xx = a * (2 * g1 + u * g2)
    x_s = -x / s
    x_ss = 2 * x / s**2
    F_s = F_x * x_s
    F_as = F_ax * x_s
    F_ss = F_xx * x_s**2 + F_x * x_ss
    w = 1 + u
    L = np.log1p(u)
    L_a = x / w
    L_s = -u / (s * w)
    L_aa = -(x / w) ** 2
    L_as = -(x / s) / w**2
    L_ss = u * (2 + u) / (s**2 * w**2)

    m1 = d.sum()
    ll = float(-F.sum() - m1 * math.log(s) - np.dot(d, L))
    grad = np.array([
        -F_a.sum() - np.dot(d, L_a),
        -F_s.sum() - m1 / s - np.dot(d, L_s),
    ])
    h_as = -F_as.sum() - np.dot(d, L_as)
    hess = np.array([
        [-F_aa.sum() - np.dot(d, L_aa), h_as],
        [h_as, -F_ss.sum() + m1 / s**2 - np.dot(d, L_ss)],
    ])
    return ll, grad, hess


@dataclass(frozen=True)
class GpdFit:
    gamma: float
    sigma: float
    loglik: float
    converged: bool
    iterations: int


def _profile(tau: float, v: np.ndarray) -> tuple[float, float]:
    """Profile log-likelihood (per excess) at tau = gamma/sigma, and gamma(tau)."""
    g = float(np.mean(np.log1p(tau * v)))
    ratio = float(np.mean(v)) if abs(g) < 1e-8 else g / tau  # sigma; exponential branch
    if ratio <= 0 or not math.isfinite(ratio):
        return -math.inf, g
    return -(math.log(ratio) + g + 1.0), g


def fit_gpd_mle(excesses, max_iter: int = 500, tol: float = 1e-9) -> GpdFit:
    """Maximum-likelihood fit of a generalized Pareto law to excesses.

    A coarse search of the profile likelihood in ``tau = gamma/sigma``
    (restricted to ``gamma >= -1``, where the likelihood is bounded) is
    refined by bounded Brent and polished by damped Newton steps in
    ``(gamma, sigma)``.
    """
    v = np.asarray(excesses, dtype=float)
    if v.size < 2 or np.any(v < 0) or np.count_nonzero(v) < 2:
        raise DomainError("GPD fit needs at least two positive excesses")
    vmax = float(v.max())
    if float(v.min()) == vmax:
        # every excess equal: no interior optimum
        return GpdFit(-1.0, vmax, -math.inf, False, 0)

    t_neg = -1.0 + np.geomspace(1e-6, 1.0, 40)[:-1]
    t_pos = np.geomspace(1e-6, 1e6, 60)
    grid = np.concatenate((t_neg, [0.0], t_pos)) / vmax
    gam = np.log1p(np.outer(grid, v)).mean(1)
    nz = grid != 0
    ratio = np.full(grid.size, float(v.mean()))
    ratio[nz] = gam[nz] / grid[nz]
    with np.errstate(divide="ignore", invalid="ignore"):
        prof = -(np.log(ratio) + gam + 1.0)
    prof[(gam < -1) | ~(ratio > 0)] = -np.inf
    i = int(np.argmax(prof))
    if not math.isfinite(prof[i]):
        return GpdFit(math.nan, math.nan, -math.inf, False, 0)
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda t: -_profile(t, v)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 / vmax})
    tau = float(res.x)
    gamma = _profile(tau, v)[1]
    sigma = float(v.mean()) if abs(gamma) < 1e-8 else gamma / tau
    theta = np.array([gamma, sigma])
    ll, grad, hess = gpd_loglik_derivatives(*theta, v)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        if step @ grad > 0:  # -step is not an ascent direction: use the gradient
            step = -grad * (1e-3 * sigma / max(np.abs(grad).max(), 1e-300))
        lam = 1.0
        while lam > 1e-12:
            cand = theta - lam * step
            if cand[1] > 0:
                ll_new, g_new, h_new = gpd_loglik_derivatives(*cand, v)
                if ll_new >= ll - 1e-12 * abs(ll):
                    break
            lam *= 0.5
        else:
            break
        change = ll_new - ll
        theta, ll, grad, hess = cand, ll_new, g_new, h_new
        scaled = np.abs(grad) * np.array([1.0, theta[1]])
        if abs(change) < tol and scaled.max() < 1e-8:
            converged = True
            break
    on_boundary = theta[0] <= -1 + 1e-9
    return GpdFit(float(theta[0]), float(theta[1]), float(ll), converged and not on_boundary, it)


def _excesses(view: TailView) -> tuple[np.ndarray, np.ndarray]:
    return view.top - view.threshold, view.top_delta


def pot(view: TailView) -> EviEstimate:
    """GPD maximum likelihood on the excesses over Z_{n-k,n}, adapted by p_hat."""
    if view.k < 2:
        raise DomainError("POT needs k >= 2")
    v, _ = _excesses(view)
    fit = fit_gpd_mle(v)
    if not fit.converged:
        raise DomainError(f"POT: GPD likelihood maximization did not converge at k={view.k}")
    return _adapted(EstimatorId.POT, view, fit.gamma, sigma=fit.sigma)


def pot_one_step(
    view: TailView,
    sample: CensoredSample | None = None,
    initial: tuple[float, float] | None = None,
) -> EviEstimate:
    """One Newton-Raphson step on the censored GPD likelihood (POT.L).

    The default starting point is the adapted moment estimate with the
    GPD mean-matching scale ``(1 - gamma) * mean(V)`` (``mean(V)`` when
    ``gamma >= 1``).
    """
    if view.k < 2:
        raise DomainError("POT.L needs k >= 2")
    v, d = _excesses(view)
    if initial is None:
        g0 = moment(view).adapted
        s0 = (1.0 - g0) * float(v.mean()) if g0 < 1 else float(v.mean())
    else:
        g0, s0 = map(float, initial)
    theta0 = (g0, s0)
    if not (math.isfinite(g0) and math.isfinite(s0) and s0 > 0):
        raise OneStepError(f"POT.L: invalid initial point {theta0}", theta0)
    ll, grad, hess = gpd_loglik_derivatives(g0, s0, v, d)
    if not math.isfinite(ll):
        raise OneStepError(f"POT.L: initial point {theta0} outside the GPD support", theta0)
    try:
        if np.linalg.cond(hess) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        step = np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        raise OneStepError(f"POT.L: singular Hessian at {theta0}", theta0) from None
    g1, s1 = float(g0 - step[0]), float(s0 - step[1])
    if not math.isfinite(g1):
        raise OneStepError("POT.L: non-finite update", theta0)
    return EviEstimate(EstimatorId.POT_L, view.k, g1, g1, {"sigma": s1, "gamma_init": g0, "sigma_init": s0})
