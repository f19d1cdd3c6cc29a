"""Implied-volatility smile construction and the SVI benchmark.

Prices are quoted forward-style: bs_price(F, K, T, sigma, r) is the
discounted Black expectation e^{-rT}(F N(d1) - K N(d2)). Inversion is a
Newton iteration safeguarded by bisection inside the no-arbitrage band
(discounted intrinsic, discounted forward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import norm

from .errors import FitDiverged, OutOfBand
from .market import CallPanel, forward
from .sedex import Density, reprice

#: prices closer than this to a band edge are classified as boundary
BAND_EPS = 1e-14

#: absolute price tolerance of the inversion
INVERSION_TOL = 1e-12


def bs_price(F, K, T: float, sigma, r: float = 0.0):
    """Forward-form call price e^{-rT}(F N(d1) - K N(d2)); vectorized."""
    F = np.asarray(F, dtype=float)
    K = np.asarray(K, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    disc = math.exp(-r * T)
    vol = sigma * math.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(vol > 0, (np.log(F / K) + 0.5 * vol**2) / vol, np.inf)
    d2 = d1 - vol
    intrinsic = disc * np.maximum(F - K, 0.0)
    live = vol > 0
    price = np.where(live, disc * (F * norm.cdf(d1) - K * norm.cdf(d2)), intrinsic)
    return price if price.ndim else float(price)


def bs_put_price(F, K, T: float, sigma, r: float = 0.0):
    """Forward-form put price via parity with the call."""
    F = np.asarray(F, dtype=float)
    K = np.asarray(K, dtype=float)
    return bs_price(F, K, T, sigma, r) - math.exp(-r * T) * (F - K)


def implied_vol(price: float, F: float, K: float, T: float, r: float = 0.0) -> float:
    """Invert a call price to its Black volatility.

    Raises OutOfBand when the price sits outside (or within BAND_EPS of)
    the static no-arbitrage band. The returned volatility reprices the
    input to within INVERSION_TOL absolutely.
    """
    disc = math.exp(-r * T)
    lo_band = disc * max(F - K, 0.0)
    hi_band = disc * F
    if not price > lo_band + BAND_EPS or not price < hi_band - BAND_EPS:
        raise OutOfBand(
            f"price {price} outside the band ({lo_band}, {hi_band}) at strike {K}"
        )

    def f(sig: float) -> float:
        return bs_price(F, K, T, sig, r) - price

    lo, hi = 0.0, 1.0
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e4:  # pragma: no cover - band check precludes this
            raise OutOfBand(f"no volatility below 1e4 reprices {price}")

    sigma = 0.5 * (lo + hi)
    sqrt_t = math.sqrt(T)
    for _ in range(200):
        err = f(sigma)
        if abs(err) <= INVERSION_TOL:
            return sigma
        if err > 0.0:
            hi = sigma
        else:
            lo = sigma
        vol = sigma * sqrt_t
        d1 = (math.log(F / K) + 0.5 * vol * vol) / vol
        vega = disc * F * norm.pdf(d1) * sqrt_t
        if vega > 0.0:
            step = sigma - err / vega
            sigma = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            sigma = 0.5 * (lo + hi)
    return sigma


@dataclass(frozen=True)
class SmilePoint:
    strike: float
    log_moneyness: float
    iv_bid: float | None
    iv_ask: float | None
    iv_model: float | None


def atm_vol(panel: CallPanel) -> float:
    """Mid-quote implied vol at the quoted strike nearest the forward.

    Moves outward to the next-nearest strikes if the nearest mid has no
    valid implied vol.
    """
    fwd = forward(panel.params)
    order = np.argsort(np.abs(panel.strikes - fwd))
    mids = panel.mids
    for i in order:
        try:
            return implied_vol(
                float(mids[i]),
                fwd,
                float(panel.strikes[i]),
                panel.params.maturity,
                panel.params.rate,
            )
        except OutOfBand:
            continue
    raise OutOfBand("no quoted strike has an invertible mid price")


def fine_strike_grid(panel: CallPanel, upper: float, factor: int = 4) -> np.ndarray:
    """Strike grid at ``factor`` times the quoted density, extended one
    quoted-range width on each side and capped to (0, upper)."""
    k = np.unique(panel.strikes)
    lo, hi = k[0], k[-1]
    span = hi - lo
    step = span / (max(len(k) - 1, 1) * factor)
    start = max(lo - span, step)
    stop = min(hi + span, upper)
    out = start + step * np.arange(math.floor((stop - start) / step) + 1)
    return out[(out > 0) & (out <= upper)]


def smile_from_density(
    density: Density,
    fine_strikes: np.ndarray,
    panel: CallPanel,
) -> list[SmilePoint]:
    """Implied-vol smile of the extracted density on a fine strike grid.

    Quoted strikes contribute their bid/ask implied vols where those are
    invertible; points whose model price has no implied vol are kept with
    an absent model vol rather than dropped.
    """
    params = panel.params
    fwd = forward(params)
    t, r = params.maturity, params.rate

    quoted: dict[float, tuple[float | None, float | None]] = {}
    for i, k in enumerate(panel.strikes):
        try:
            ivb = implied_vol(float(panel.bid[i]), fwd, float(k), t, r)
        except OutOfBand:
            ivb = None
        try:
            iva = implied_vol(float(panel.ask[i]), fwd, float(k), t, r)
        except OutOfBand:
            iva = None
        quoted[float(k)] = (ivb, iva)

    strikes = np.unique(np.concatenate([np.asarray(fine_strikes, float), panel.strikes]))
    prices = reprice(density, strikes, r, t)
    points = []
    for k, price in zip(strikes, prices):
        try:
            ivm = implied_vol(float(price), fwd, float(k), t, r)
        except OutOfBand:
            ivm = None
        ivb, iva = quoted.get(float(k), (None, None))
        points.append(
            SmilePoint(
                strike=float(k),
                log_moneyness=math.log(k / fwd),
                iv_bid=ivb,
                iv_ask=iva,
                iv_model=ivm,
            )
        )
    return points


@dataclass(frozen=True)
class SviParams:
    """Raw five-parameter total-variance slice w(k) = a + b(rho(k-m) + sqrt((k-m)^2 + sigma^2))."""

    a: float
    b: float
    rho: float
    m: float
    sigma: float

    def __post_init__(self):
        if self.b < 0 or abs(self.rho) > 1 or self.sigma <= 0:
            raise ValueError("need b >= 0, |rho| <= 1, sigma > 0")


def svi_eval(params: SviParams, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    z = k - params.m
    w = params.a + params.b * (params.rho * z + np.hypot(z, params.sigma))
    return w if w.ndim else float(w)


def _latin_hypercube(n: int, dims: int, rng: np.random.Generator) -> np.ndarray:
    u = (rng.permuted(np.tile(np.arange(n), (dims, 1)), axis=1).T + rng.random((n, dims))) / n
    return u


def svi_fit(
    log_moneyness: np.ndarray,
    mid_vols: np.ndarray,
    maturity: float,
    n_starts: int = 32,
    seed: int = 0,
) -> SviParams:
    """Least-squares calibration of the raw slice to mid implied vols.

    Runs deterministic multi-start local searches from a Latin hypercube
    over the parameter box and keeps the best fit.
    """
    k = np.asarray(log_moneyness, dtype=float)
    vols = np.asarray(mid_vols, dtype=float)
    if len(k) < 5:
        raise ValueError("need at least 5 smile points for a 5-parameter fit")
    w_obs = vols**2 * maturity

    w_max = float(w_obs.max())
    span = float(max(k.max() - k.min(), 1e-3))
    lo = np.array([-w_max, 0.0, -1.0, k.min(), 1e-6])
    hi = np.array([w_max, 8.0 * w_max / span, 1.0, k.max(), span])

    def residual(theta):
        a, b, rho, m, sig = theta
        z = k - m
        return a + b * (rho * z + np.hypot(z, sig)) - w_obs

    rng = np.random.default_rng(seed)
    starts = lo + _latin_hypercube(n_starts, 5, rng) * (hi - lo)
    best = None
    for x0 in starts:
        try:
            res = least_squares(
                residual, x0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15
            )
        except Exception:
            continue
        if res.success and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise FitDiverged("every calibration start failed")
    a, b, rho, m, sig = best.x
    return SviParams(a=float(a), b=float(b), rho=float(rho), m=float(m), sigma=float(sig))


@dataclass(frozen=True)
class EnvelopeRow:
    strike: float
    dev_model_ask: float
    dev_model_bid: float
    dev_svi_ask: float | None
    dev_svi_bid: float | None


@dataclass(frozen=True)
class EnvelopeReport:
    rows: tuple[EnvelopeRow, ...]
    max_dev_model: float
    max_dev_svi: float | None


def envelope_report(
    points: list[SmilePoint],
    svi: SviParams | None = None,
    maturity: float | None = None,
) -> EnvelopeReport:
    """Per-strike overshoot of each curve outside the quoted vol envelope.

    Each quote side constrains independently: a strike whose bid carries
    no implied vol still caps the curves by its ask, and vice versa.
    Deviations are max(0, curve - iv_ask) and max(0, iv_bid - curve).
    """
    rows = []
    max_model = 0.0
    max_svi: float | None = 0.0 if svi is not None else None
    for pt in points:
        if pt.iv_bid is None and pt.iv_ask is None:
            continue
        iv_svi = None
        if svi is not None:
            if maturity is None:
                raise ValueError("maturity is required to evaluate the svi curve")
            w = svi_eval(svi, pt.log_moneyness)
            iv_svi = math.sqrt(max(w, 0.0) / maturity)

        def overshoot(curve):
            if curve is None:
                return 0.0, 0.0
            up = max(0.0, curve - pt.iv_ask) if pt.iv_ask is not None else 0.0
            down = max(0.0, pt.iv_bid - curve) if pt.iv_bid is not None else 0.0
            return up, down

        dma, dmb = overshoot(pt.iv_model)
        max_model = max(max_model, dma, dmb)
        dsa = dsb = None
        if iv_svi is not None:
            dsa, dsb = overshoot(iv_svi)
            max_svi = max(max_svi, dsa, dsb)
        rows.append(
            EnvelopeRow(
                strike=pt.strike,
                dev_model_ask=dma,
                dev_model_bid=dmb,
                dev_svi_ask=dsa,
                dev_svi_bid=dsb,
            )
        )
    return EnvelopeReport(rows=tuple(rows), max_dev_model=max_model, max_dev_svi=max_svi)
