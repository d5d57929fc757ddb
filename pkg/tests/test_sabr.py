"""SABR smile, Black premium, normal CDF, and implied-vol inversion."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dcsurf.sabr import (
    ABOVE_BOUND,
    BELOW_INTRINSIC,
    SabrParams,
    black_call,
    implied_vol_black,
    implied_vol_black_batch,
    norm_cdf,
    sabr_iv,
)

BASE = SabrParams(alpha=0.2, beta=1.0, rho=-0.4, nu=0.6, f=1.0, r=0.04, q=0.0)


def test_sabr_params_validation():
    with pytest.raises(ValueError):
        SabrParams(alpha=0.0)
    with pytest.raises(ValueError):
        SabrParams(beta=1.5)
    with pytest.raises(ValueError):
        SabrParams(rho=-1.0)
    with pytest.raises(ValueError):
        SabrParams(nu=-0.1)
    with pytest.raises(ValueError):
        SabrParams(f=0.0)
    with pytest.raises(ValueError):
        SabrParams(r=float("inf"))


def test_flat_smile_is_exact():
    p = SabrParams(alpha=0.2, beta=1.0, rho=0.3, nu=0.0, f=1.0, r=0.04)
    K = np.linspace(0.1, 2.5, 25)
    tau = np.linspace(0.1, 5.0, 11)
    for t in tau:
        assert np.all(sabr_iv(K, t, p) == 0.2)


def test_atm_hand_value():
    # sigma_ATM = alpha (1 + (rho beta nu alpha / 4 + (2 - 3 rho^2) nu^2 / 24) tau)
    expected = 0.2 * (1.0 + (0.25 * (-0.4) * 1.0 * 0.6 * 0.2 + (2 - 3 * 0.16) / 24 * 0.36))
    assert expected == pytest.approx(0.20216, abs=1e-15)
    assert sabr_iv(1.0, 1.0, BASE) == pytest.approx(expected, abs=1e-12)


# A one-sided bump of 1e-7 picks up the genuine smile slope
# ~ sigma |rho| nu / (2 alpha) * 1e-7, so the 1e-8 one-sided budget only
# applies to parameter sets whose slope fits inside it.
@pytest.mark.parametrize(
    "p",
    [
        SabrParams(alpha=0.2, beta=1.0, rho=0.0, nu=0.6),
        SabrParams(alpha=0.3, beta=1.0, rho=-0.3, nu=0.3),
        SabrParams(alpha=0.3, beta=0.5, rho=0.25, nu=0.8, f=1.3, r=0.01),
    ],
)
def test_atm_continuity(p):
    atm = sabr_iv(p.f, 2.0, p)
    up = sabr_iv(p.f * (1 + 1e-7), 2.0, p)
    dn = sabr_iv(p.f * (1 - 1e-7), 2.0, p)
    assert abs(up - atm) < 1e-8
    assert abs(dn - atm) < 1e-8


def test_atm_continuity_zero_skew_is_exact():
    # rho = 0, beta = 1: the smile is flat to O(z^2) at the money, so the
    # exact-ATM branch must agree with the near-ATM branch to roundoff.
    p = SabrParams(alpha=0.2, beta=1.0, rho=0.0, nu=0.6)
    atm = sabr_iv(p.f, 2.0, p)
    assert abs(sabr_iv(p.f * (1 + 1e-7), 2.0, p) - atm) < 1e-12
    assert abs(sabr_iv(p.f * (1 - 1e-7), 2.0, p) - atm) < 1e-12


@pytest.mark.parametrize(
    "p",
    [
        BASE,
        SabrParams(alpha=0.3, beta=0.5, rho=0.25, nu=0.8, f=1.3, r=0.01),
        SabrParams(alpha=0.15, beta=0.0, rho=-0.7, nu=0.4, f=0.9, r=0.0),
    ],
)
def test_atm_continuity_centered(p):
    # The centered mean of the two one-sided values cancels the slope term,
    # leaving only curvature O(z^2), so any skew strength must pass this.
    atm = sabr_iv(p.f, 2.0, p)
    up = sabr_iv(p.f * (1 + 1e-7), 2.0, p)
    dn = sabr_iv(p.f * (1 - 1e-7), 2.0, p)
    assert abs(0.5 * (up + dn) - atm) < 1e-10


def test_sabr_formula_against_extended_precision():
    # The printed formula transcribed naively at 50 decimal digits is the
    # oracle for the cancellation-safe rewrite of z/chi(z).
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 50

    def oracle(K, tau, p):
        F = mpmath.mpf(p.f)
        K = mpmath.mpf(K)
        tau = mpmath.mpf(tau)
        alpha, beta, rho, nu = (mpmath.mpf(v) for v in (p.alpha, p.beta, p.rho, p.nu))
        omb = 1 - beta
        series = (
            omb**2 / 24 * alpha**2 / (F * K) ** omb
            + rho * beta * nu * alpha / (4 * (F * K) ** (omb / 2))
            + (2 - 3 * rho**2) / 24 * nu**2
        )
        num = alpha * (1 + series * tau)
        den = (F * K) ** (omb / 2) * (
            1 + omb**2 / 24 * mpmath.log(F / K) ** 2 + omb**4 / 1920 * mpmath.log(F / K) ** 4
        )
        z = nu / alpha * (F * K) ** (omb / 2) * mpmath.log(F / K)
        chi = mpmath.log((mpmath.sqrt(1 - 2 * rho * z + z**2) + z - rho) / (1 - rho))
        return float(num / den * z / chi)

    for p in (BASE, SabrParams(alpha=0.3, beta=0.5, rho=0.25, nu=0.8, f=1.3, r=0.01)):
        for K in (0.1, 0.4, 0.9, 1.1, 1.7, 2.5):
            for tau in (0.1, 1.0, 5.0):
                got = sabr_iv(K * p.f, tau, p)
                want = oracle(K * p.f, tau, p)
                assert abs(got - want) < 1e-12 * (1 + abs(want))


def test_sabr_input_validation():
    with pytest.raises(ValueError):
        sabr_iv(0.0, 1.0, BASE)
    with pytest.raises(ValueError):
        sabr_iv(1.0, 0.0, BASE)
    with pytest.raises(ValueError):
        sabr_iv(float("nan"), 1.0, BASE)


def test_black_call_degenerate_cases():
    assert black_call(1.2, 1.0, 0.0, 1.0, 0.0) == pytest.approx(0.2, abs=1e-15)
    assert black_call(1.2, 1.0, 0.05, 0.0, 0.3) == pytest.approx(0.2, abs=1e-15)
    # deep strike limit: N(d) -> 1
    assert black_call(1.0, 1e-12, 0.04, 1.0, 0.2) == pytest.approx(math.exp(-0.04), abs=1e-12)
    with pytest.raises(ValueError):
        black_call(1.0, -1.0, 0.0, 1.0, 0.2)
    with pytest.raises(ValueError):
        black_call(1.0, 1.0, 0.0, -1.0, 0.2)


def test_black_call_atm_closed_form():
    # Independent route: C_ATM = e^{-r tau} F (2 N(sigma sqrt(tau)/2) - 1).
    F, r, tau, sigma = 1.0, 0.04, 1.0, 0.2
    want = math.exp(-r * tau) * F * (2.0 * norm_cdf(sigma * math.sqrt(tau) / 2.0) - 1.0)
    assert black_call(F, F, r, tau, sigma) == pytest.approx(want, abs=1e-15)


def test_black_call_monotonicity_and_bounds():
    K = np.linspace(0.05, 2.5, 200)
    c = black_call(1.0, K, 0.04, 2.0, 0.25)
    assert np.all(np.diff(c) <= 1e-15)
    assert np.all(np.diff(np.diff(c)) >= -1e-10)
    assert np.all(c >= 0) and np.all(c <= math.exp(-0.08))
    c_sigma = [black_call(1.0, 1.1, 0.04, 2.0, s) for s in (0.1, 0.2, 0.4, 0.8)]
    assert np.all(np.diff(c_sigma) > 0)


def test_norm_cdf_basics():
    assert norm_cdf(0.0) == 0.5
    rng = np.random.default_rng(3)
    x = rng.normal(0, 3, size=1000)
    assert np.max(np.abs(norm_cdf(x) + norm_cdf(-x) - 1.0)) < 1e-14


def test_norm_cdf_against_quadrature():
    from scipy.integrate import quad

    # integrate from 0 so the estimate is not dominated by the empty tail
    for x in (-2.3, -0.5, 0.7, 1.959963985, 3.1):
        val, err = quad(lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi), 0.0, x, epsabs=1e-15)
        assert err < 1e-12
        assert abs(norm_cdf(x) - (0.5 + val)) < 1e-13
    assert abs(norm_cdf(1.959963985) - 0.975) < 1e-9


def test_implied_vol_round_trip_single():
    price = black_call(1.0, 1.2, 0.04, 1.5, 0.3)
    res = implied_vol_black(price, 1.0, 1.2, 0.04, 1.5)
    assert res.ok
    assert res.sigma == pytest.approx(0.3, abs=1e-8)


def test_implied_vol_invalid_reasons():
    # below intrinsic
    res = implied_vol_black(0.5 * math.exp(-0.04) * 0.5, 1.0, 0.5, 0.04, 1.0)
    assert not res.ok and res.reason == BELOW_INTRINSIC and res.sigma is None
    # above the discounted-forward bound
    res = implied_vol_black(1.0, 1.0, 0.8, 0.04, 1.0)
    assert not res.ok and res.reason == ABOVE_BOUND
    # exactly at the bound counts as invalid too
    res = implied_vol_black(math.exp(-0.04), 1.0, 0.8, 0.04, 1.0)
    assert not res.ok and res.reason == ABOVE_BOUND


def test_implied_vol_round_trip_sweep():
    # Deep-ITM short-expiry low-vol cells round the premium to intrinsic in
    # double precision, so no inversion can see sigma there.  The sigma-space
    # bound applies where one ulp of the stored premium moves sigma by less
    # than a quarter of the budget; price-space repricing must hold everywhere.
    sigmas = np.arange(0.05, 1.0001, 0.05)
    moneyness = np.arange(0.5, 1.5001, 0.1)
    taus = np.array([0.1, 0.5, 1.0, 2.0, 5.0])
    F, r = 1.0, 0.04
    worst = 0.0
    n_cells = 0
    n_informative = 0
    for tau in taus:
        disc = math.exp(-r * tau)
        for m in moneyness:
            K = m * F
            prices = black_call(F, K, r, tau, sigmas)
            got, reason = implied_vol_black_batch(prices, F, K, r, tau)
            assert all(rs is None for rs in reason)
            assert np.max(np.abs(black_call(F, K, r, tau, got) - prices)) < 1e-10 * disc * F
            d1 = (math.log(F / K) + 0.5 * sigmas**2 * tau) / (sigmas * math.sqrt(tau))
            vega = disc * F * np.exp(-0.5 * d1**2) / math.sqrt(2 * math.pi) * math.sqrt(tau)
            with np.errstate(divide="ignore"):
                informative = np.spacing(prices) / vega < 2.5e-8
            n_cells += sigmas.size
            n_informative += int(informative.sum())
            if informative.any():
                worst = max(worst, float(np.max(np.abs(got - sigmas)[informative])))
    assert worst < 1e-7
    assert n_informative > 0.9 * n_cells


def test_implied_vol_batch_matches_scalar():
    F, r, tau = 1.0, 0.04, 2.0
    K = np.array([0.7, 1.0, 1.3])
    prices = black_call(F, K, r, tau, 0.25)
    got, reason = implied_vol_black_batch(prices, F, K, r, tau)
    for i in range(3):
        res = implied_vol_black(float(prices[i]), F, float(K[i]), r, tau)
        assert res.ok and got[i] == res.sigma


def test_generated_surface_is_arbitrage_consistent():
    # premium from the smile: nonincreasing and convex in K, nondecreasing in
    # tau.  With r > 0 the discount factor alone drags deep-ITM premiums down
    # in tau (the K=0 value is e^{-r tau}), so the calendar check applies to
    # forward premiums e^{r tau} C.
    K = np.linspace(0.05, 2.5, 150)
    taus = [0.25, 0.5, 1.0, 2.0, 5.0]
    prev = None
    for tau in taus:
        c = black_call(BASE.f, K, BASE.r, tau, sabr_iv(K, tau, BASE))
        assert np.all(np.diff(c) <= 1e-8)
        assert np.all(np.diff(np.diff(c)) >= -1e-8)
        fwd = math.exp(BASE.r * tau) * c
        if prev is not None:
            assert np.all(fwd >= prev - 1e-10)
        prev = fwd
