"""Shared builders and independent oracles used across the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from rndx import aries
from rndx.market import (
    CallPanel,
    Chain,
    MarketParams,
    OptionKind,
    Quote,
    QuoteOrigin,
)
from rndx.smile import bs_price, bs_put_price

#: one SPX-style tick expressed in units of an index-scale spot
TICK = 0.05 / 4565.0


def make_panel(strikes, bid, ask, bid_size=10.0, ask_size=10.0, params=None):
    strikes = np.asarray(strikes, dtype=float)
    n = len(strikes)
    if params is None:
        params = MarketParams(spot=1.0, rate=0.0, dividend_yield=0.0, maturity=1 / 365)
    return CallPanel(
        params=params,
        strikes=strikes,
        bid=np.asarray(bid, dtype=float),
        ask=np.asarray(ask, dtype=float),
        bid_size=np.broadcast_to(np.asarray(bid_size, float), (n,)).copy(),
        ask_size=np.broadcast_to(np.asarray(ask_size, float), (n,)).copy(),
        origin=tuple([QuoteOrigin.NATIVE_CALL] * n),
    )


def bs_panel(params: MarketParams, strikes, sigma: float, half_spread=0.0) -> CallPanel:
    """Call panel of Black-Scholes mids (normalized spot) with flat spreads."""
    fwd = params.spot * np.exp((params.rate - params.dividend_yield) * params.maturity)
    mids = bs_price(fwd, np.asarray(strikes, float), params.maturity, sigma, params.rate)
    return make_panel(
        strikes, np.maximum(mids - half_spread, 0.0), mids + half_spread, params=params
    )


def bs_chain(params: MarketParams, strikes, sigma: float, half_spread=0.0) -> Chain:
    """Chain quoting both legs at every strike from Black-Scholes values."""
    fwd = params.spot * np.exp((params.rate - params.dividend_yield) * params.maturity)
    quotes = []
    for k in strikes:
        c = float(bs_price(fwd, k, params.maturity, sigma, params.rate))
        p = float(bs_put_price(fwd, k, params.maturity, sigma, params.rate))
        quotes.append(
            Quote(strike=k, bid=max(c - half_spread, 0.0), ask=c + half_spread,
                  bid_size=10.0, ask_size=10.0, kind=OptionKind.CALL)
        )
        quotes.append(
            Quote(strike=k, bid=max(p - half_spread, 0.0), ask=p + half_spread,
                  bid_size=10.0, ask_size=10.0, kind=OptionKind.PUT)
        )
    return Chain(params=params, quotes=tuple(quotes))


def random_rational_panel(rng: np.random.Generator, n: int) -> CallPanel:
    """Small panel with coarse rational prices and integer sizes."""
    params = MarketParams(
        spot=1.0,
        rate=float(rng.integers(0, 3)) / 100.0,
        dividend_yield=float(rng.integers(0, 2)) / 100.0,
        maturity=float(rng.integers(1, 30)) / 365.0,
    )
    strikes = np.sort(rng.choice(np.arange(70, 131), size=n, replace=False)) / 100.0
    fair = np.maximum(1.0 - strikes, 0.02) * (1 + rng.integers(-5, 6, n) / 50.0)
    half = rng.integers(0, 4, n) / 200.0
    bid = np.maximum(np.round((fair - half) * 100) / 100, 0.0)
    ask = np.maximum(np.round((fair + half) * 100) / 100, bid)
    return make_panel(
        strikes,
        bid,
        ask,
        bid_size=rng.integers(1, 11, n).astype(float),
        ask_size=rng.integers(1, 11, n).astype(float),
        params=params,
    )


def lp_constraint_rows(lp: aries.LpInstance):
    """All constraints of the detection polyhedron as rows a @ x <= b."""
    n = lp.n
    d = 2 * n + 2
    rows_a, rows_b = [], []
    for i in range(lp.a_ge.shape[0]):
        rows_a.append(-lp.a_ge[i])
        rows_b.append(0.0)
    for i in range(n):
        e = np.zeros(d); e[i] = -1.0
        rows_a.append(e); rows_b.append(0.0)
        e = np.zeros(d); e[i] = 1.0
        rows_a.append(e); rows_b.append(float(lp.q_ask_max[i]))
        e = np.zeros(d); e[n + i] = -1.0
        rows_a.append(e); rows_b.append(0.0)
        e = np.zeros(d); e[n + i] = 1.0
        rows_a.append(e); rows_b.append(float(lp.q_bid_max[i]))
    e = np.zeros(d); e[2 * n + 1] = 1.0
    rows_a.append(e); rows_b.append(0.0)
    return np.asarray(rows_a), np.asarray(rows_b)


def enumerate_vertices(lp: aries.LpInstance, tol: float = 1e-9) -> np.ndarray:
    """Feasible vertices of the detection polyhedron by exhaustive bases."""
    a, b = lp_constraint_rows(lp)
    d = a.shape[1]
    combos = np.array(list(itertools.combinations(range(len(a)), d)))
    mats = a[combos]
    rhs = b[combos]
    dets = np.abs(np.linalg.det(mats))
    ok = dets > 1e-9
    verts = np.full((len(combos), d), np.nan)
    verts[ok] = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]
    feas = ok & np.all(a @ verts.T <= b[:, None] + tol, axis=0)
    return verts[feas]


def oracle_classification(panel: CallPanel, tol: float = 1e-9) -> aries.Classification:
    """Classify a small panel by brute-force vertex enumeration.

    Strong iff some feasible vertex has positive cash intake; else weak
    iff a zero-intake vertex carries a payoff that is not identically
    zero, measured by the total payoff mass over all breakpoints (which
    vanishes exactly when the payoff does).
    """
    lp = aries.build_lp(panel)
    n = lp.n
    verts = enumerate_vertices(lp, tol=tol)
    if len(verts) == 0:
        raise RuntimeError("no feasible vertex; the zero point should always be one")
    intake = -(verts @ lp.c)
    if intake.max() > tol:
        return aries.Classification.STRONG
    g = np.sum(lp.a_ge, axis=0)
    g[2 * n + 1] -= lp.erT
    face = intake >= -tol
    if np.max(verts[face] @ g) > tol:
        return aries.Classification.WEAK
    return aries.Classification.NO_ARBITRAGE


def payoff_breakpoints(panel: CallPanel, sol: aries.ArbitrageSolution):
    """Terminal payoff of a solution at s = 0, every strike, and the slope."""
    lp = aries.build_lp(panel)
    rows, at_zero, slope = aries.payoff_profile(lp, sol.q_ask, sol.q_bid, sol.u, sol.alpha)
    return np.concatenate([[at_zero], rows, [slope]])
