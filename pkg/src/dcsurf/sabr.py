"""SABR implied volatility, Black-76 premiums, and implied-vol inversion.

The lognormal SABR expansion supplies ground-truth smiles, the Black formula
turns them into call premiums, and the inversion maps model premiums back to
implied volatility for scoring in vol space. All routines vectorize over
strikes/expiries; scalar wrappers keep single-point call sites tidy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

BELOW_INTRINSIC = "price below intrinsic"
ABOVE_BOUND = "price above forward bound"
NO_CONVERGENCE = "no convergence"

IV_BRACKET = (1e-6, 5.0)
IV_MAX_ITER = 200


@dataclass(frozen=True)
class SabrParams:
    """Lognormal SABR parameters plus the forward curve inputs."""

    alpha: float = 0.2
    beta: float = 1.0
    rho: float = -0.4
    nu: float = 0.6
    f: float = 1.0
    r: float = 0.04
    q: float = 0.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0):
            raise ValueError("alpha must be positive")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError("beta must lie in [0, 1]")
        if not (abs(self.rho) < 1.0):
            # chi(z) divides by 1 - rho
            raise ValueError("rho must lie strictly inside (-1, 1)")
        if not (self.nu >= 0.0):
            raise ValueError("nu must be nonnegative")
        if not (self.f > 0):
            raise ValueError("forward must be positive")
        for name in ("alpha", "beta", "rho", "nu", "f", "r", "q"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class IvResult:
    """Implied-vol inversion outcome: a vol, or an invalidity reason."""

    sigma: float | None
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.reason is None


def norm_cdf(x):
    """Standard normal CDF (complementary-error-function based)."""
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(x) == 0 else out


def _norm_pdf(x):
    return np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _chi_ratio(z: np.ndarray, rho: float) -> np.ndarray:
    """z / chi(z) with chi(z) = ln((sqrt(1-2 rho z+z^2)+z-rho)/(1-rho)).

    Written via log1p with root-1 = (z^2-2 rho z)/(1+root) so that neither
    small |z| nor the z < 0 branch loses precision to cancellation; the
    ratio tends to 1 as z -> 0.
    """
    z = np.asarray(z, dtype=float)
    root = np.sqrt(1.0 - 2.0 * rho * z + z * z)
    root_m1 = (z * z - 2.0 * rho * z) / (1.0 + root)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(
            z >= 0.0,
            np.log1p((root_m1 + z) / (1.0 - rho)),
            -np.log1p((root_m1 - z) / (1.0 + rho)),
        )
        ratio = z / chi
    return np.where(np.abs(z) < 1e-10, 1.0, ratio)


def sabr_iv(K, tau, p: SabrParams):
    """Lognormal SABR implied volatility at strike K and expiry tau.

    At the money (|ln(F/K)| < 1e-10) the z/chi(z) factor is dropped, and a
    zero vol-of-vol makes the factor exactly 1; both are the analytic limits.
    """
    K_arr = np.asarray(K, dtype=float)
    tau_arr = np.asarray(tau, dtype=float)
    scalar = K_arr.ndim == 0 and tau_arr.ndim == 0
    K_arr, tau_arr = np.broadcast_arrays(np.atleast_1d(K_arr), np.atleast_1d(tau_arr))
    if not (np.all(K_arr > 0) and np.all(tau_arr > 0)):
        raise ValueError("strike and expiry must be positive")
    if not (np.all(np.isfinite(K_arr)) and np.all(np.isfinite(tau_arr))):
        raise ValueError("strike and expiry must be finite")

    F, alpha, beta, rho, nu = p.f, p.alpha, p.beta, p.rho, p.nu
    omb = 1.0 - beta
    log_fk = np.log(F / K_arr)
    fk_pow_half = (F * K_arr) ** (omb / 2.0)

    series = (
        omb**2 / 24.0 * alpha**2 / (F * K_arr) ** omb
        + 0.25 * rho * beta * nu * alpha / fk_pow_half
        + (2.0 - 3.0 * rho**2) / 24.0 * nu**2
    )
    numerator = alpha * (1.0 + series * tau_arr)
    denominator = fk_pow_half * (
        1.0 + omb**2 / 24.0 * log_fk**2 + omb**4 / 1920.0 * log_fk**4
    )

    if nu == 0.0:
        ratio = 1.0
    else:
        z = (nu / alpha) * fk_pow_half * log_fk
        ratio = np.where(np.abs(log_fk) < 1e-10, 1.0, _chi_ratio(z, rho))
    sigma = numerator / denominator * ratio
    return float(sigma[0]) if scalar else sigma


def black_call(F, K, r, tau, sigma):
    """Black-76 call premium e^{-r tau}[F N(d1) - K N(d2)].

    Zero expiry or zero volatility degenerate to discounted intrinsic value.
    """
    F_arr, K_arr, tau_arr, sig_arr = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (F, K, tau, sigma))
    )
    scalar = all(np.ndim(v) == 0 for v in (F, K, tau, sigma))
    if not (np.all(F_arr > 0) and np.all(K_arr > 0)):
        raise ValueError("forward and strike must be positive")
    if np.any(tau_arr < 0) or np.any(sig_arr < 0):
        raise ValueError("expiry and volatility must be nonnegative")

    disc = np.exp(-r * tau_arr)
    degenerate = (tau_arr == 0.0) | (sig_arr == 0.0)
    sd = np.where(degenerate, 1.0, sig_arr * np.sqrt(tau_arr))
    with np.errstate(divide="ignore"):
        d1 = (np.log(F_arr / K_arr) + 0.5 * sig_arr**2 * tau_arr) / sd
    d2 = d1 - sd
    live = disc * (F_arr * ndtr(d1) - K_arr * ndtr(d2))
    intrinsic = disc * np.maximum(F_arr - K_arr, 0.0)
    out = np.where(degenerate, intrinsic, live)
    return float(out[0]) if scalar else out


def implied_vol_black_batch(price, F, K, r, tau):
    """Vectorized Black implied vol: (sigma array, reason array).

    Reasons are None where the inversion succeeded. Bracketed bisection on
    IV_BRACKET with safeguarded Newton steps; a point converges when its
    Newton step stalls or its bracket collapses, and must then reprice to
    within 1e-10 of the discounted forward.
    """
    price_a, K_a, tau_a = np.broadcast_arrays(
        *(np.atleast_1d(np.asarray(v, dtype=float)) for v in (price, K, tau))
    )
    if np.any(K_a <= 0) or np.any(tau_a <= 0):
        raise ValueError("strike and expiry must be positive")
    n = price_a.shape
    disc = np.exp(-r * tau_a)
    intrinsic = disc * np.maximum(F - K_a, 0.0)
    upper = disc * F
    ftol = 1e-10 * upper

    sigma = np.full(n, np.nan)
    reason = np.full(n, None, dtype=object)
    reason[price_a < intrinsic] = BELOW_INTRINSIC
    reason[price_a >= upper] = ABOVE_BOUND
    active = (price_a >= intrinsic) & (price_a < upper)
    if not active.any():
        return sigma, reason

    lo = np.full(n, IV_BRACKET[0])
    hi = np.full(n, IV_BRACKET[1])
    x = 0.5 * (lo + hi)
    done = ~active
    sqrt_tau = np.sqrt(tau_a)

    for _ in range(IV_MAX_ITER):
        f = black_call(F, K_a, r, tau_a, x) - price_a
        neg = f < 0
        lo = np.where(~done & neg, x, lo)
        hi = np.where(~done & ~neg, x, hi)

        d1 = (np.log(F / K_a) + 0.5 * x * x * tau_a) / (x * sqrt_tau)
        vega = disc * F * _norm_pdf(d1) * sqrt_tau
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # Newton in log price: far OTM the premium spans hundreds of
            # orders of magnitude, where linear Newton gains one e-fold per
            # step; near the root this reduces to the plain step f / vega.
            newton = x - np.log1p(f / price_a) * (f + price_a) / vega
        usable = np.isfinite(newton) & (newton > lo) & (newton < hi)
        step = np.where(usable, np.abs(newton - x), np.inf)
        x_next = np.where(usable, newton, 0.5 * (lo + hi))

        now_done = ~done & (
            (hi - lo < 1e-13 * np.maximum(1.0, x)) | ((step < 1e-14 * np.maximum(1.0, x)) & (np.abs(f) < ftol))
        )
        sigma = np.where(now_done, x, sigma)
        done = done | now_done
        x = np.where(done, np.where(np.isnan(sigma), x, sigma), x_next)
        if done.all():
            break

    # Whatever is still open keeps its last iterate if it reprices cleanly.
    open_ = active & np.isnan(sigma)
    if open_.any():
        f = black_call(F, K_a, r, tau_a, x) - price_a
        good = open_ & (np.abs(f) < ftol)
        sigma = np.where(good, x, sigma)
        reason[open_ & ~good] = NO_CONVERGENCE
    return sigma, reason


def implied_vol_black(price: float, F: float, K: float, r: float, tau: float) -> IvResult:
    """Black implied volatility of one premium; Invalid outside price bounds."""
    sigma, reason = implied_vol_black_batch(price, F, K, r, tau)
    if reason[0] is not None:
        return IvResult(sigma=None, reason=reason[0])
    return IvResult(sigma=float(sigma[0]))
