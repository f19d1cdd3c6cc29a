"""Estimate the risk-free rate and dividend yield from put-call parity.

A synthetic forward C - P is affine in strike: Y(K) = b0 + b1*K with
b0 = S0*exp(-qT) and b1 = -exp(-rT). We fit (b0, b1) by weighted least
squares against the bid-ask midpoints of the synthetic forward, with
weights favouring tight spreads and near-the-money strikes, then invert
for (r, q) under box constraints that keep both nonnegative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesign, EmptyIntersection
from .market import Chain, OptionKind

INTRADAY_CUTOFF = 1.0 / 365.0

# open box faces are clamped at these offsets
_BETA1_MAX = -1e-12
_BETA0_MIN_FRAC = 1e-12


@dataclass(frozen=True)
class ParityFit:
    beta0: float
    beta1: float
    rate: float
    dividend_yield: float
    strikes: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    n_strikes: int
    skipped_intraday: bool = False
    clamped: bool = False  # the unconstrained optimum sat outside the box


def synthetic_forward_bounds(chain: Chain):
    """Executable bounds for C - P at every strike quoted on both legs.

    Returns (strikes, lower, upper, mid, spread) where lower = Cbid - Pask
    and upper = Cask - Pbid.
    """
    calls = {q.strike: q for q in chain.quotes if q.kind is OptionKind.CALL}
    puts = {q.strike: q for q in chain.quotes if q.kind is OptionKind.PUT}
    common = sorted(set(calls) & set(puts))
    if not common:
        raise EmptyIntersection("no strike carries both a call and a put quote")
    strikes = np.asarray(common, dtype=float)
    lower = np.array([calls[k].bid - puts[k].ask for k in common])
    upper = np.array([calls[k].ask - puts[k].bid for k in common])
    mid = (lower + upper) / 2.0
    spread = upper - lower
    return strikes, lower, upper, mid, spread


def parity_weights(
    strikes: np.ndarray,
    spreads: np.ndarray,
    spot: float,
    alpha: float = 0.5,
    upsilon: float | None = None,
) -> np.ndarray:
    """Convex mix of normalized inverse-spread and ATM-proximity weights.

    Zero spreads are replaced by the smallest positive spread in the
    panel (1e-8 if every spread is zero) so the inverse stays finite.
    """
    strikes = np.asarray(strikes, dtype=float)
    spreads = np.asarray(spreads, dtype=float).copy()
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if upsilon is None:
        gaps = np.diff(np.unique(strikes))
        upsilon = float(gaps.min() / spot) if gaps.size else 1e-3
    if upsilon <= 0.0:
        raise ValueError(f"upsilon must be positive, got {upsilon}")

    positive = spreads[spreads > 0.0]
    floor = positive.min() if positive.size else 1e-8
    spreads[spreads <= 0.0] = floor

    eta_spr = 1.0 / spreads
    eta_atm = 1.0 / (np.abs(strikes / spot - 1.0) + upsilon)
    return (1.0 - alpha) * eta_spr / eta_spr.max() + alpha * eta_atm / eta_atm.max()


def _wls_objective(beta0, beta1, strikes, mid, w):
    r = beta0 + beta1 * strikes - mid
    return float(np.sum(w * r * r))


def _box_wls(strikes, mid, w, spot):
    """Minimize sum w*(b0 + b1*K - mid)^2 over 0 < b0 <= S0, -1 <= b1 < 0.

    The unconstrained optimum is closed form; if it violates the box the
    minimum sits on one of the four edges, each of which reduces to a
    clamped one-dimensional weighted fit.
    """
    sw = float(np.sum(w))
    sx = float(np.sum(w * strikes))
    sxx = float(np.sum(w * strikes * strikes))
    sy = float(np.sum(w * mid))
    sxy = float(np.sum(w * strikes * mid))
    det = sw * sxx - sx * sx
    if abs(det) <= 1e-14 * max(sw * sxx, sx * sx, 1.0):
        raise DegenerateDesign("parity regression needs at least two distinct strikes")

    b1 = (sw * sxy - sx * sy) / det
    b0 = (sy - b1 * sx) / sw

    b0_lo, b0_hi = _BETA0_MIN_FRAC * spot, spot
    b1_lo, b1_hi = -1.0, _BETA1_MAX
    if b0_lo <= b0 <= b0_hi and b1_lo <= b1 <= b1_hi:
        return b0, b1, False

    candidates = []
    for b0_fixed in (b0_lo, b0_hi):
        b1_edge = (sxy - b0_fixed * sx) / sxx if sxx > 0 else b1_hi
        b1_edge = min(max(b1_edge, b1_lo), b1_hi)
        candidates.append((b0_fixed, b1_edge))
    for b1_fixed in (b1_lo, b1_hi):
        b0_edge = (sy - b1_fixed * sx) / sw
        b0_edge = min(max(b0_edge, b0_lo), b0_hi)
        candidates.append((b0_edge, b1_fixed))
    best = min(candidates, key=lambda c: _wls_objective(*c, strikes, mid, w))
    return best[0], best[1], True


def fit_parity(
    chain: Chain,
    alpha: float = 0.5,
    upsilon: float | None = None,
) -> ParityFit:
    """Fit (r, q) from the chain's synthetic forwards.

    Maturities below one calendar day skip the regression entirely and
    return r = q = 0: annualizing through 1/T would amplify quote noise
    into absurd rates.
    """
    params = chain.params
    strikes, _, _, mid, spread = synthetic_forward_bounds(chain)
    if params.maturity < INTRADAY_CUTOFF:
        zeros = np.zeros_like(strikes)
        return ParityFit(
            beta0=params.spot,
            beta1=-1.0,
            rate=0.0,
            dividend_yield=0.0,
            strikes=strikes,
            weights=np.ones_like(strikes),
            residuals=zeros,
            n_strikes=len(strikes),
            skipped_intraday=True,
        )
    if len(np.unique(strikes)) < 2:
        raise DegenerateDesign("parity regression needs at least two distinct strikes")

    w = parity_weights(strikes, spread, params.spot, alpha=alpha, upsilon=upsilon)
    beta0, beta1, clamped = _box_wls(strikes, mid, w, params.spot)
    rate = -math.log(-beta1) / params.maturity
    div = -math.log(beta0 / params.spot) / params.maturity
    residuals = beta0 + beta1 * strikes - mid
    return ParityFit(
        beta0=beta0,
        beta1=beta1,
        rate=rate,
        dividend_yield=div,
        strikes=strikes,
        weights=w,
        residuals=residuals,
        n_strikes=len(strikes),
        clamped=clamped,
    )
