import math

import mpmath
import numpy as np
import pytest
from scipy.stats import genpareto

from censored_evi import estimators as est
from censored_evi.core import CensoredSample, DomainError, EstimatorId, FullyCensoredTailError, make_tail_view
from censored_evi.distributions import CensoringScheme, TailModel, generate_censored
from censored_evi.registry import estimate

from conftest import pareto_quantile_sample


# ---------------------------------------------------------------- oracles

def hill_oracle(z_sorted, k):
    n = len(z_sorted)
    return sum(math.log(z_sorted[n - j]) for j in range(1, k + 1)) / k - math.log(z_sorted[n - k - 1])


def uh_oracle(z_sorted, k):
    n = len(z_sorted)
    uh = [z_sorted[n - j - 1] * hill_oracle(z_sorted, j) for j in range(1, k + 2)]
    return sum(math.log(u) for u in uh[:k]) / k - math.log(uh[k])


def zipf_oracle(z_sorted, k):
    n = len(z_sorted)
    w = [math.log((k + 1) / (j + 1)) for j in range(1, k + 1)]
    wbar = sum(w) / k
    y = [math.log(z_sorted[n - j]) for j in range(1, k + 1)]
    num = sum((w[i] - wbar) * y[i] for i in range(k)) / k
    den = sum(wi * wi for wi in w) / k - wbar**2
    return num / den


def km_oracle(z_sorted, d_sorted, b, which="F", strict=False):
    """1 - F(b) (or 1 - G(b)) by the product-limit formula, term by term."""
    n = len(z_sorted)
    out = 1.0
    for j in range(1, n + 1):
        zj = z_sorted[j - 1]
        if zj < b or (zj == b and not strict):
            e = d_sorted[j - 1] if which == "F" else 1 - d_sorted[j - 1]
            out *= ((n - j) / (n - j + 1)) ** e
    return out


def ww_oracle(z_sorted, d_sorted, k, variant):
    n = len(z_sorted)
    thr = z_sorted[n - k - 1]
    total = 0.0
    for j in range(1, k + 1):
        zj = z_sorted[n - j]
        if d_sorted[n - j] == 0:
            continue
        g_left = km_oracle(z_sorted, d_sorted, zj, "G", strict=True)
        if variant == "ww_km":
            term = math.log(zj / thr)
        elif variant == "as_printed":
            term = j * math.log(zj / thr)
        else:
            term = j * math.log(zj / z_sorted[n - j - 1])
        total += term / g_left
    return total / (n * km_oracle(z_sorted, d_sorted, thr, "F"))


def censored_gpd_loglik(gamma, sigma, v, d):
    """Independent censored log-likelihood via scipy's generalized Pareto."""
    return float(np.sum(np.where(d == 1, genpareto.logpdf(v, gamma, scale=sigma), genpareto.logsf(v, gamma, scale=sigma))))


# ---------------------------------------------------------------- closed forms

def test_s4_values(s4_view):
    assert est.hill(s4_view).raw == pytest.approx(2.0, abs=1e-12)
    assert est.moment(s4_view).raw == pytest.approx(-0.5, abs=1e-12)
    assert est.moment_ratio(s4_view).raw == pytest.approx(7 / 6, abs=1e-12)
    assert est.peng_moment(s4_view).raw == pytest.approx(-4 / 3, abs=1e-12)
    assert est.mvrb(s4_view, 0.5, -1.0).raw == pytest.approx(1.625, abs=1e-12)


def test_s4_log_moments(s4_view):
    m1, m2 = est.log_moments(s4_view, (1, 2))
    assert m1 == pytest.approx(2.0, abs=1e-12)
    assert m2 == pytest.approx(14 / 3, abs=1e-12)


def test_hill_adapted_s4c(s4c):
    res = est.hill(make_tail_view(s4c, 3))
    assert res.raw == pytest.approx(2.0, abs=1e-12)
    assert res.adapted == pytest.approx(6.0, abs=1e-12)


def test_hill_scale_invariance(s4):
    doubled = CensoredSample(2 * s4.z, s4.delta)
    assert est.hill(make_tail_view(doubled, 3)).raw == pytest.approx(2.0, abs=1e-12)


def test_hill_fully_censored():
    s = CensoredSample(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1, 1, 0, 0]))
    with pytest.raises(FullyCensoredTailError):
        est.hill(make_tail_view(s, 2))


def test_uh_s4_hand_value(s4):
    # UH_1 = e^2 * 1, UH_2 = e * 1.5, UH_3 = 1 * 2
    expected = 0.5 * (2 + 1 + math.log(1.5)) - math.log(2)
    res = est.generalized_hill(make_tail_view(s4, 2))
    assert res.raw == pytest.approx(expected, abs=1e-12)
    assert res.raw == pytest.approx(uh_oracle(list(s4.z), 2), abs=1e-12)
    assert res.adapted == res.raw


def test_uh_needs_k_below_n_minus_one(s4):
    with pytest.raises(DomainError):
        est.generalized_hill(make_tail_view(s4, 3))


def test_uh_exact_pareto_tail():
    n = 1000
    z = np.sort((n / np.arange(1, n + 1)) ** 0.5)
    view = make_tail_view(CensoredSample(z, np.ones(n, dtype=int)), 100)
    res = est.generalized_hill(view)
    assert abs(res.raw - 0.5) < 0.1
    assert res.raw == pytest.approx(uh_oracle(list(z), 100), rel=1e-10)


def test_zipf_s4_hand_value(s4_view):
    expected = zipf_oracle(list(s4_view.z_sorted), 3)
    assert est.zipf(s4_view).raw == pytest.approx(expected, abs=1e-12)


def test_zipf_deterministic_pareto():
    view = make_tail_view(pareto_quantile_sample(1000, 0.5), 100)
    res = est.zipf(view).raw
    assert abs(res - 0.5) < 0.05
    assert res == pytest.approx(zipf_oracle(list(view.z_sorted), 100), rel=1e-10)


def test_zipf_needs_k_two(s4):
    with pytest.raises(DomainError):
        est.zipf(make_tail_view(s4, 1))


def test_mvrb_beta_zero_is_hill(s4_view):
    for rho in (-0.1, -1.0, -3.0):
        assert est.mvrb(s4_view, 0.0, rho).raw == est.hill(s4_view).raw


def test_mvrb_rho_zero_rejected(s4_view):
    with pytest.raises(DomainError):
        est.mvrb(s4_view, 0.5, 0.0)


def test_moments_degenerate_spacings():
    s = CensoredSample(np.array([1.0, 2.0, 2.0, 2.0, 2.0]), np.ones(5, dtype=int))
    view = make_tail_view(s, 3)
    for f in (est.moment, est.moment_ratio, est.peng_moment):
        with pytest.raises(DomainError):
            f(view)


def test_peng_moment_algebra(s4_view):
    m1 = est.log_moments(s4_view, (1,))[0]
    lhs = est.peng_moment(s4_view).raw - est.moment_ratio(s4_view).raw
    rhs = est.moment(s4_view).raw - m1
    assert lhs == pytest.approx(rhs, abs=1e-12)


# ---------------------------------------------------------------- Kaplan-Meier

def test_km_hand_products():
    s = CensoredSample(np.array([1.0, 2.0, 3.0]), np.array([1, 0, 1]))
    assert est.km_survival(s, "F")(2.0) == pytest.approx(2 / 3, abs=1e-12)
    assert est.km_survival(s, "G")(2.0) == pytest.approx(1 / 2, abs=1e-12)


def test_km_left_limits():
    s = CensoredSample(np.array([1.0, 2.0, 3.0]), np.array([1, 0, 1]))
    g = est.km_survival(s, "G")
    assert g.left_limit(2.0) == 1.0
    assert g.left_limit(3.0) == pytest.approx(0.5, abs=1e-12)
    assert g.left_limit(0.5) == 1.0
    assert np.all(g.left_limits >= g.survival)
    assert np.all(np.diff(g.survival) <= 0)


def test_km_telescoping():
    rng = np.random.default_rng(1)
    z = np.sort(rng.pareto(2.0, 50) + 1)
    s = CensoredSample(z, np.ones(50, dtype=int))
    f = est.km_survival(s, "F")
    for k in range(1, 50):
        assert 50 * f(z[50 - k - 1]) == pytest.approx(k, abs=1e-12)


def test_km_matches_oracle_on_random_sample():
    rng = np.random.default_rng(5)
    z = np.round(rng.exponential(size=40), 1) + 0.1  # with ties
    d = rng.integers(0, 2, 40)
    s = CensoredSample(z, d)
    order = np.argsort(z, kind="stable")
    zs, ds = list(z[order]), list(d[order])
    for which in ("F", "G"):
        curve = est.km_survival(s, which)
        for b in np.unique(z):
            assert curve(b) == pytest.approx(km_oracle(zs, ds, b, which), abs=1e-12)
            assert curve.left_limit(b) == pytest.approx(km_oracle(zs, ds, b, which, strict=True), abs=1e-12)


# ---------------------------------------------------------------- WW estimators

def test_ww_without_censoring_s4(s4_view):
    assert est.ww_km(s4_view).raw == pytest.approx(2.0, abs=1e-12)
    assert est.ww_leurgans(s4_view, variant="consecutive_spacings").raw == pytest.approx(2.0, abs=1e-12)
    assert est.ww_leurgans(s4_view, variant="as_printed").raw == pytest.approx(10 / 3, abs=1e-12)


def test_ww_default_variant_is_as_printed(s4_view):
    assert est.ww_leurgans(s4_view).raw == pytest.approx(10 / 3, abs=1e-12)


def test_ww_five_point_oracle(five_point):
    view = make_tail_view(five_point, 3)
    zs, ds = list(view.z_sorted), list(view.delta_sorted)
    km = est.ww_km(view)
    assert km.raw == pytest.approx(ww_oracle(zs, ds, 3, "ww_km"), abs=1e-12)
    assert km.raw == pytest.approx(0.5 * math.log(5), abs=1e-12)  # hand value
    assert km.adapted == km.raw
    for variant in ("as_printed", "consecutive_spacings"):
        res = est.ww_leurgans(view, variant=variant)
        assert res.raw == pytest.approx(ww_oracle(zs, ds, 3, variant), abs=1e-12)


def test_ww_random_censored_oracle():
    rng = np.random.default_rng(11)
    s = CensoredSample(rng.pareto(2.0, 60) + 1, (rng.random(60) < 0.7).astype(int))
    view = make_tail_view(s, 20)
    zs, ds = list(view.z_sorted), list(view.delta_sorted)
    assert est.ww_km(view).raw == pytest.approx(ww_oracle(zs, ds, 20, "ww_km"), rel=1e-12)
    for variant in ("as_printed", "consecutive_spacings"):
        assert est.ww_leurgans(view, variant=variant).raw == pytest.approx(
            ww_oracle(zs, ds, 20, variant), rel=1e-12)


def test_ww_censored_maximum_stays_finite():
    # 1 - G jumps to 0 at a censored maximum, but only the left limit is used
    s = CensoredSample(np.arange(1.0, 7.0), np.array([1, 1, 1, 1, 1, 0]))
    g = est.km_survival(s, "G")
    assert g(6.0) == 0.0 and g.left_limit(6.0) == 1.0
    assert math.isfinite(est.ww_km(make_tail_view(s, 3)).raw)


def test_ww_degenerate_km():
    # tied noncensored maxima put the last KM factor 0 inside 1 - F(threshold)
    s = CensoredSample(np.array([1.0, 2.0, 3.0, 3.0]), np.array([1, 1, 1, 1]))
    with pytest.raises(est.KaplanMeierDegenerateError):
        est.ww_km(make_tail_view(s, 1))


def test_ww_unknown_variant(s4_view):
    with pytest.raises(DomainError):
        est.ww_leurgans(s4_view, variant="other")


# ---------------------------------------------------------------- GPD likelihood

def test_gpd_loglik_matches_scipy_and_fd():
    rng = np.random.default_rng(3)
    v = genpareto.rvs(0.3, scale=2.0, size=80, random_state=rng)
    d = (rng.random(80) < 0.7).astype(int)
    for gamma, sigma in [(0.3, 2.0), (-0.2, 1.5), (1e-5, 1.0), (0.0, 1.0)]:
        if gamma < 0 and np.any(1 + gamma * v / sigma <= 0):
            continue
        ll, grad, hess = est.gpd_loglik_derivatives(gamma, sigma, v, d)
        assert ll == pytest.approx(censored_gpd_loglik(gamma, sigma, v, d), rel=1e-10)
        h = 1e-5
        f = lambda a, b: censored_gpd_loglik(a, b, v, d)  # noqa: E731
        fd = [(f(gamma + h, sigma) - f(gamma - h, sigma)) / (2 * h),
              (f(gamma, sigma + h) - f(gamma, sigma - h)) / (2 * h)]
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-5)
        g = lambda a, b: est.gpd_loglik_derivatives(a, b, v, d)[1]  # noqa: E731
        fd_h = np.column_stack([(g(gamma + h, sigma) - g(gamma - h, sigma)) / (2 * h),
                                (g(gamma, sigma + h) - g(gamma, sigma - h)) / (2 * h)])
        np.testing.assert_allclose(hess, fd_h, rtol=1e-5, atol=1e-4)


def test_gpd_loglik_outside_support():
    ll, grad, _ = est.gpd_loglik_derivatives(-1.0, 1.0, np.array([0.5, 2.0]))
    assert ll == -math.inf and np.all(np.isnan(grad))


def test_fit_gpd_deterministic_quantiles():
    m = 500
    j = np.arange(1, m + 1)
    v = ((j / (m + 1)) ** -0.5 - 1) / 0.5
    fit = est.fit_gpd_mle(v)
    assert fit.converged
    assert abs(fit.gamma - 0.5) < 0.05
    assert np.all(1 + fit.gamma * v / fit.sigma > 0)


def test_fit_gpd_exponential_branch():
    j = np.arange(1, 501)
    fit = est.fit_gpd_mle(-np.log(j / 501))
    assert fit.converged and abs(fit.gamma) < 0.05


def test_fit_gpd_gradient_vanishes():
    rng = np.random.default_rng(8)
    for c in (-0.3, 0.1, 0.6):
        v = genpareto.rvs(c, scale=1.0, size=200, random_state=rng)
        fit = est.fit_gpd_mle(v)
        h = 1e-6
        f = lambda a, b: censored_gpd_loglik(a, b, v, np.ones_like(v))  # noqa: E731
        fd = [(f(fit.gamma + h, fit.sigma) - f(fit.gamma - h, fit.sigma)) / (2 * h),
              (f(fit.gamma, fit.sigma + h) - f(fit.gamma, fit.sigma - h)) / (2 * h)]
        assert max(abs(x) for x in fd) <= 1e-6 * max(1.0, abs(fit.loglik)) + 1e-5
        assert np.max(np.abs(est.gpd_loglik_derivatives(fit.gamma, fit.sigma, v)[1])) <= 1e-6
        c_sp, _, s_sp = genpareto.fit(v, floc=0)
        assert fit.loglik >= censored_gpd_loglik(c_sp, s_sp, v, np.ones_like(v)) - 1e-8


def test_fit_gpd_repeated_value():
    fit = est.fit_gpd_mle(np.full(10, 2.0))
    assert not fit.converged


def test_fit_gpd_needs_two_excesses():
    with pytest.raises(DomainError):
        est.fit_gpd_mle([1.0])


def test_pot_is_divisor_adapted(s4c):
    rng = np.random.default_rng(2)
    s = CensoredSample(rng.pareto(2.0, 300) + 1, (rng.random(300) < 0.8).astype(int))
    view = make_tail_view(s, 60)
    res = est.pot(view)
    assert res.adapted == pytest.approx(res.raw / view.p_hat, rel=1e-14)
    assert res.aux["sigma"] > 0


# ---------------------------------------------------------------- POT.L

def _mp_loglik(gamma, sigma, v, d):
    total = mpmath.mpf(0)
    for vi, di in zip(v, d):
        w = 1 + gamma * mpmath.mpf(vi) / sigma
        log_surv = -mpmath.log(w) / gamma
        total += (-mpmath.log(sigma) + (1 + 1 / gamma) * -mpmath.log(w)) if di else log_surv
    return total


def test_pot_one_step_matches_high_precision_newton():
    model = TailModel.burr(1.0, 2.0, 1.0)
    sample = generate_censored(model, CensoringScheme.for_model(model, 0.35), 1000, 2024)
    view = make_tail_view(sample, 100)
    res = est.pot_one_step(view, sample)
    g0, s0 = res.aux["gamma_init"], res.aux["sigma_init"]
    v = view.top - view.threshold
    d = view.top_delta
    with mpmath.workdps(40):
        f = lambda a, b: _mp_loglik(a, b, v, d)  # noqa: E731
        ga = mpmath.diff(f, (g0, s0), (1, 0))
        gs = mpmath.diff(f, (g0, s0), (0, 1))
        haa = mpmath.diff(f, (g0, s0), (2, 0))
        has = mpmath.diff(f, (g0, s0), (1, 1))
        hss = mpmath.diff(f, (g0, s0), (0, 2))
        H = mpmath.matrix([[haa, has], [has, hss]])
        step = mpmath.lu_solve(H, mpmath.matrix([ga, gs]))
        g1 = float(g0 - step[0])
        s1 = float(s0 - step[1])
    assert res.adapted == pytest.approx(g1, abs=1e-6)
    assert res.aux["sigma"] == pytest.approx(s1, abs=1e-6)
    assert res.raw == res.adapted


def test_pot_one_step_initial_point_is_moment():
    model = TailModel.burr(1.0, 2.0, 1.0)
    sample = generate_censored(model, CensoringScheme.for_model(model, 0.35), 1000, 5)
    view = make_tail_view(sample, 100)
    res = est.pot_one_step(view)
    g0 = est.moment(view).adapted
    v = view.top - view.threshold
    assert res.aux["gamma_init"] == g0
    expected_sigma = (1 - g0) * v.mean() if g0 < 1 else v.mean()
    assert res.aux["sigma_init"] == pytest.approx(expected_sigma, rel=1e-14)


def test_pot_one_step_fixed_point():
    rng = np.random.default_rng(4)
    z = np.sort(rng.pareto(2.0, 400) + 1)
    view = make_tail_view(CensoredSample(z, np.ones(400, dtype=int)), 80)
    fit = est.fit_gpd_mle(view.top - view.threshold)
    res = est.pot_one_step(view, initial=(fit.gamma, fit.sigma))
    assert res.adapted == pytest.approx(fit.gamma, abs=1e-8)


def test_pot_one_step_errors(s4):
    with pytest.raises(DomainError):
        est.pot_one_step(make_tail_view(s4, 1))
    view = make_tail_view(s4, 3)
    with pytest.raises(est.OneStepError) as info:
        est.pot_one_step(view, initial=(-2.0, 1.0))
    assert info.value.initial == (-2.0, 1.0)


# ---------------------------------------------------------------- cross-cutting

def test_zero_censoring_reductions():
    rng = np.random.default_rng(9)
    s = CensoredSample(rng.pareto(1.5, 500) + 1, np.ones(500, dtype=int))
    view = make_tail_view(s, 50)
    h = est.hill(view).raw
    assert est.ww_km(view).raw == pytest.approx(h, abs=1e-12)
    assert est.ww_leurgans(view, variant="consecutive_spacings").raw == pytest.approx(h, abs=1e-12)
    for eid in EstimatorId:
        if eid in (EstimatorId.WW_KM, EstimatorId.WW_L, EstimatorId.POT_L):
            continue
        res = estimate(view, eid)
        assert res.adapted == res.raw


CONSISTENT = [e for e in EstimatorId if e not in (EstimatorId.ERM, EstimatorId.WW_L)]


@pytest.mark.parametrize("eid", CONSISTENT, ids=lambda e: e.value)
def test_consistency_on_deterministic_pareto(eid):
    view = make_tail_view(pareto_quantile_sample(1000, 0.5), 100)
    assert abs(estimate(view, eid).raw - 0.5) < 0.1


def test_consistency_ww_leurgans_consecutive():
    view = make_tail_view(pareto_quantile_sample(1000, 0.5), 100)
    assert abs(estimate(view, "WW_L", ww_variant="consecutive_spacings").raw - 0.5) < 0.1
