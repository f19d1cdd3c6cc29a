"""Synthetic ground truth: Heston pricing/density via the Fourier-cosine
expansion, a parametric spread overlay, and seeded arbitrage contamination.

The stochastic-volatility model provides a controlled environment with a
known terminal density; the extraction pipeline itself never sees the
model, only the generated quotes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cousot import check as cousot_check
from .errors import CannotViolate, TruncationTooNarrow
from .market import CallPanel, MarketParams, QuoteOrigin, forward

#: series length and cumulant multiple; one-day densities are extremely
#: peaked, so both sit well above textbook defaults
N_TERMS = 4096
TRUNC_L = 12.0


@dataclass(frozen=True)
class HestonParams:
    v0: float
    theta: float
    kappa: float
    sigma_vol: float
    rho: float

    def __post_init__(self):
        if min(self.v0, self.theta, self.kappa, self.sigma_vol) <= 0:
            raise ValueError("v0, theta, kappa and sigma_vol must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")


#: parameter set used throughout the synthetic experiments
TOY_HESTON = HestonParams(v0=0.0117, theta=0.0394, kappa=1.0, sigma_vol=0.30, rho=-0.70)


@dataclass(frozen=True)
class SpreadModel:
    """Gaussian bump centered at the forward on top of a constant floor."""

    s_peak: float
    s_base: float
    h: float

    def __post_init__(self):
        if self.s_base <= 0 or self.s_peak < 0 or self.h <= 0:
            raise ValueError("need s_base > 0, s_peak >= 0, h > 0")

    def spread(self, strikes: np.ndarray, fwd: float) -> np.ndarray:
        k = np.asarray(strikes, dtype=float)
        return self.s_peak * np.exp(-((k - fwd) ** 2) / (2.0 * self.h**2)) + self.s_base


def heston_cf(u, params: HestonParams, rate: float, div: float, maturity: float):
    """Characteristic function of ln(S_T/S_0) under the risk-neutral measure.

    Uses the branch-stable formulation (the 'little trap' variant), which
    keeps the complex logarithm continuous over long maturities and the
    large frequency ranges the cosine expansion requires.
    """
    u = np.asarray(u, dtype=complex)
    kappa, theta, sigma, rho, v0 = (
        params.kappa,
        params.theta,
        params.sigma_vol,
        params.rho,
        params.v0,
    )
    t = maturity
    beta = kappa - 1j * rho * sigma * u
    d = np.sqrt(beta * beta + sigma * sigma * (1j * u + u * u))
    g = (beta - d) / (beta + d)
    edt = np.exp(-d * t)
    log_term = np.log((1.0 - g * edt) / (1.0 - g))
    a = 1j * u * (rate - div) * t + kappa * theta / sigma**2 * (
        (beta - d) * t - 2.0 * log_term
    )
    b = (beta - d) / sigma**2 * (1.0 - edt) / (1.0 - g * edt)
    return np.exp(a + b * v0)


def _log_cumulants(params: HestonParams, rate, div, maturity):
    """First two cumulants of ln(S_T/S_0); standard truncation-range inputs."""
    t = maturity
    kap, th, sig, rho, v0 = (
        params.kappa,
        params.theta,
        params.sigma_vol,
        params.rho,
        params.v0,
    )
    ekt = math.exp(-kap * t)
    c1 = (rate - div) * t + (1.0 - ekt) * (th - v0) / (2.0 * kap) - 0.5 * th * t
    c2 = (
        sig * t * kap * ekt * (v0 - th) * (8.0 * kap * rho - 4.0 * sig)
        + kap * rho * sig * (1.0 - ekt) * (16.0 * th - 8.0 * v0)
        + 2.0 * th * kap * t * (-4.0 * kap * rho * sig + sig**2 + 4.0 * kap**2)
        + sig**2 * ((th - 2.0 * v0) * ekt**2 + th * (6.0 * ekt - 7.0) + 2.0 * v0)
        + 8.0 * kap**2 * (v0 - th) * (1.0 - ekt)
    ) / (8.0 * kap**3)
    return c1, c2


def _truncation_range(params, rate, div, maturity, trunc_l):
    c1, c2 = _log_cumulants(params, rate, div, maturity)
    half = trunc_l * math.sqrt(max(c2, 0.0))
    return c1 - half, c1 + half


def _cos_coefficients(params, rate, div, maturity, a, b, n_terms):
    k = np.arange(n_terms)
    u = k * math.pi / (b - a)
    phi = heston_cf(u, params, rate, div, maturity)
    # coefficients below double precision are exact zeros at working
    # precision; keeping them only accumulates rounding noise over the sum
    phi[np.abs(phi) < 1e-16] = 0.0
    return k, u, phi


def _density_on_log_grid(x, params, rate, div, maturity, a, b, n_terms):
    k, _, phi = _cos_coefficients(params, rate, div, maturity, a, b, n_terms)
    fk = 2.0 / (b - a) * np.real(phi * np.exp(-1j * k * math.pi * a / (b - a)))
    fk[0] *= 0.5
    x = np.asarray(x, dtype=float)
    return np.cos(np.outer(x - a, k) * (math.pi / (b - a))) @ fk


def _check_truncation(params, rate, div, maturity, a, b, n_terms, tol=1e-8):
    """Estimate the probability mass outside [a, b] on a doubled range."""
    a2, b2 = _truncation_range(params, rate, div, maturity, 2 * TRUNC_L)
    for lo, hi in ((a2, a), (b, b2)):
        if hi <= lo:
            continue
        xs = np.linspace(lo, hi, 513)
        f = _density_on_log_grid(xs, params, rate, div, maturity, a2, b2, n_terms)
        if abs(np.trapezoid(f, xs)) > tol:
            raise TruncationTooNarrow(
                f"mass outside the cosine truncation range exceeds {tol:g}"
            )


def cos_price(
    strikes,
    params: HestonParams,
    market: MarketParams,
    n_terms: int = N_TERMS,
    trunc_l: float = TRUNC_L,
) -> np.ndarray:
    """European call prices by the cosine expansion of the log-return density.

    The put payoff (K - S0*e^X)+ is integrated against the series in
    log-return space with per-strike limits and calls recovered through
    parity. At day-scale maturities the density support is narrower than
    the strike offsets, so the textbook single-range log-moneyness form
    would clip the payoff; integrating in X with exact limits does not.
    """
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    r, q, t = market.rate, market.dividend_yield, market.maturity
    a, b = _truncation_range(params, r, q, t, trunc_l)
    _check_truncation(params, r, q, t, a, b, n_terms)
    k, _, phi = _cos_coefficients(params, r, q, t, a, b, n_terms)

    width = b - a
    omega = k * math.pi / width  # (n_terms,)
    s0 = market.spot
    d = np.clip(np.log(strikes / s0), a, b)  # (n,) upper integration limit

    # psi_k(a, d) = int_a^d cos(omega (x - a)) dx
    arg_d = np.outer(d - a, omega)  # (n, n_terms)
    psi = np.empty_like(arg_d)
    psi[:, 0] = d - a
    psi[:, 1:] = np.sin(arg_d[:, 1:]) / omega[1:]
    # chi_k(a, d) = int_a^d e^x cos(omega (x - a)) dx
    chi = (
        np.exp(d)[:, None] * (np.cos(arg_d) + omega * np.sin(arg_d))
        - math.exp(a)
    ) / (1.0 + omega**2)

    vk = 2.0 / width * (strikes[:, None] * psi - s0 * chi)  # put coefficients
    fk = np.real(phi * np.exp(-1j * omega * a))
    fk[0] *= 0.5
    puts = math.exp(-r * t) * (vk @ fk)
    calls = puts + math.exp(-r * t) * (forward(market) - strikes)
    return calls


def cos_density(
    grid_points,
    params: HestonParams,
    market: MarketParams,
    n_terms: int = N_TERMS,
    trunc_l: float = TRUNC_L,
) -> np.ndarray:
    """Terminal-price density of S_T evaluated at the given price levels."""
    s = np.atleast_1d(np.asarray(grid_points, dtype=float))
    if np.any(s <= 0):
        raise ValueError("price levels must be positive")
    r, q, t = market.rate, market.dividend_yield, market.maturity
    a, b = _truncation_range(params, r, q, t, trunc_l)
    _check_truncation(params, r, q, t, a, b, n_terms)
    x = np.log(s / market.spot)
    fx = np.zeros_like(x)
    inside = (x >= a) & (x <= b)
    fx[inside] = _density_on_log_grid(x[inside], params, r, q, t, a, b, n_terms)
    return fx / s


def apply_spreads(
    strikes,
    mids,
    model: SpreadModel,
    market: MarketParams,
    bid_size: float = 10.0,
    ask_size: float = 10.0,
) -> CallPanel:
    """Wrap mid prices into a bid-ask call panel.

    Bids are clamped at zero rather than dropped: the synthetic panels
    must keep their full strike set, and a zero bid is a valid quote for
    the downstream constraints (chain-level cleaning is where worthless
    quotes get discarded). Mids may evaluate to exactly zero far in the
    wings where the true value is below double resolution; the spread
    floor still keeps the ask positive there.
    """
    strikes = np.asarray(strikes, dtype=float)
    mids = np.asarray(mids, dtype=float)
    if np.any(mids < 0):
        raise ValueError("mid prices must be nonnegative")
    half = model.spread(strikes, forward(market)) / 2.0
    bid = np.maximum(mids - half, 0.0)
    ask = mids + half
    n = len(strikes)
    return CallPanel(
        params=market,
        strikes=strikes,
        bid=bid,
        ask=ask,
        bid_size=np.full(n, float(bid_size)),
        ask_size=np.full(n, float(ask_size)),
        origin=tuple([QuoteOrigin.NATIVE_CALL] * n),
    )


def heston_panel(
    market: MarketParams,
    params: HestonParams = TOY_HESTON,
    k_lo: float = 0.87,
    k_hi: float = 1.03,
    n_strikes: int = 84,
    spread_model: SpreadModel | None = None,
    bid_size: float = 10.0,
    ask_size: float = 10.0,
) -> CallPanel:
    """The toy panel: equally spaced strikes, cosine-method mids.

    Without a spread model the quotes are frictionless (bid = ask = mid).
    """
    strikes = np.linspace(k_lo, k_hi, n_strikes)
    mids = np.maximum(cos_price(strikes, params, market), 0.0)
    if spread_model is None:
        n = len(strikes)
        return CallPanel(
            params=market,
            strikes=strikes,
            bid=mids,
            ask=mids,
            bid_size=np.full(n, float(bid_size)),
            ask_size=np.full(n, float(ask_size)),
            origin=tuple([QuoteOrigin.NATIVE_CALL] * n),
        )
    return apply_spreads(strikes, mids, spread_model, market, bid_size, ask_size)


def contaminate(
    panel: CallPanel,
    fraction: float,
    magnitude: float,
    seed: int,
    max_tries: int = 64,
) -> CallPanel:
    """Inject executable arbitrage by tightening selected quotes inward.

    A fraction of strikes is drawn at random; each has its bid raised or
    its ask lowered by magnitude times the local spread, so every
    perturbed interval stays inside the original one. Redraws until the
    strict consistency checks report at least one violation.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if not 0.0 < magnitude < 1.0:
        raise CannotViolate(f"magnitude must be in (0, 1), got {magnitude}")
    n = len(panel)
    n_pick = math.ceil(fraction * n)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        picked = rng.choice(n, size=n_pick, replace=False)
        raise_bid = rng.random(n_pick) < 0.5
        bid = panel.bid.copy()
        ask = panel.ask.copy()
        shift = magnitude * (ask[picked] - bid[picked])
        bid[picked] = np.where(raise_bid, bid[picked] + shift, bid[picked])
        ask[picked] = np.where(~raise_bid, ask[picked] - shift, ask[picked])
        out = CallPanel(
            params=panel.params,
            strikes=panel.strikes,
            bid=bid,
            ask=ask,
            bid_size=panel.bid_size,
            ask_size=panel.ask_size,
            origin=panel.origin,
        )
        if not cousot_check(out).clean:
            return out
    raise CannotViolate(
        f"magnitude {magnitude} produced no violation in {max_tries} draws"
    )
