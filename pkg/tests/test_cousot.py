from __future__ import annotations

from math import comb

import numpy as np

from rndx import cousot
from rndx.market import MarketParams

from helpers import bs_panel, make_panel


class TestFamilySizes:
    def test_table_denominators_for_84_strikes(self, bidask_panel):
        report = cousot.check(bidask_panel)
        assert report.totals_checked["vertical"] == comb(84, 2) == 3486
        assert report.totals_checked["butterfly"] == comb(84, 3) == 95284
        assert report.totals_checked["positivity"] == 84
        assert report.totals_checked["lower_bound"] == 84

    def test_strike_zero_extends_spread_families(self):
        panel = bs_panel(
            MarketParams(spot=1.0, rate=0.01, dividend_yield=0.0, maturity=0.1),
            np.linspace(0.8, 1.2, 9),
            sigma=0.2,
        )
        report = cousot.check(panel, include_strike_zero=True)
        assert report.totals_checked["vertical"] == comb(10, 2)
        assert report.totals_checked["butterfly"] == comb(10, 3)
        assert report.totals_checked["lower_bound"] == 9


class TestCleanPanels:
    def test_frictionless_bs_panel_clean(self):
        params = MarketParams(spot=1.0, rate=0.02, dividend_yield=0.01,
                              maturity=30 / 365)
        panel = bs_panel(params, np.linspace(0.7, 1.3, 25), sigma=0.25)
        report = cousot.check(panel, include_strike_zero=True)
        assert report.clean

    def test_prices_from_positive_densities_clean(self):
        # call prices of a strictly positive terminal density satisfy all
        # four strict families; in particular full-triple convexity holds
        # whenever adjacent-triple convexity does
        rng = np.random.default_rng(11)
        params = MarketParams(spot=1.0, rate=0.01, dividend_yield=0.0, maturity=0.1)
        s = np.linspace(0.2, 2.5, 120)
        for _ in range(25):
            w = rng.dirichlet(np.full(len(s), 0.8))
            w = (w + 1e-5) / (w + 1e-5).sum()
            fwd = float(w @ s)
            spot = fwd * params.discount / params.carry_discount
            pp = MarketParams(spot=1.0, rate=params.rate,
                              dividend_yield=params.dividend_yield,
                              maturity=params.maturity)
            n = int(rng.integers(4, 12))
            strikes = np.sort(rng.choice(s[10:-10], size=n, replace=False))
            prices = params.discount * np.maximum(s[None, :] - strikes[:, None], 0) @ w
            prices = prices / spot
            panel = make_panel(strikes / spot, prices, prices, params=pp)
            report = cousot.check(panel, include_strike_zero=True)
            assert report.clean


class TestViolations:
    def test_raised_bid_creates_vertical_violation(self):
        strikes = np.array([0.9, 1.0, 1.1])
        mids = np.array([0.12, 0.05, 0.02])
        bid = mids.copy()
        ask = mids.copy()
        bid[1] = ask[0] + 0.01  # quote at 1.0 bids above the 0.9 ask
        ask[1] = bid[1]
        panel = make_panel(strikes, bid, ask)
        report = cousot.check(panel)
        assert (0, 1) in report.vertical

    def test_zero_ask_hits_positivity(self):
        panel = make_panel([0.9, 1.0], [0.1, 0.0], [0.2, 0.0])
        report = cousot.check(panel)
        assert report.positivity == [1]

    def test_lower_bound_violation(self):
        params = MarketParams(spot=1.0, rate=0.0, dividend_yield=0.0,
                              maturity=1 / 365)
        # intrinsic is 1 - K = 0.10; an ask below that violates the bound
        panel = make_panel([0.9, 1.0], [0.08, 0.002], [0.09, 0.004],
                           params=params)
        report = cousot.check(panel)
        assert 0 in report.lower_bound

    def test_butterfly_violation_on_concave_prices(self):
        prices = np.array([0.20, 0.10, 0.065])  # slopes -1.0 then -0.35: convex
        panel = make_panel([0.9, 1.0, 1.1], prices, prices)
        assert cousot.check(panel).clean
        concave = np.array([0.20, 0.16, 0.10])  # middle above the 0.15 chord
        panel = make_panel([0.9, 1.0, 1.1], concave, concave)
        report = cousot.check(panel)
        assert (0, 1, 2) in report.butterfly

    def test_duplicate_strike_uses_executable_extremes(self):
        # two instruments at 1.0: families must use the lowest ask and
        # highest bid, and a same-strike crossing is itself a violation
        panel = make_panel([0.9, 1.0, 1.0, 1.1],
                           [0.10, 0.048, 0.050, 0.02],
                           [0.11, 0.052, 0.055, 0.03])
        report = cousot.check(panel)
        assert report.clean
        assert report.totals_checked["vertical"] == 3 + 1  # pairs + the cross
        crossed = make_panel([0.9, 1.0, 1.0, 1.1],
                             [0.10, 0.048, 0.056, 0.02],
                             [0.11, 0.052, 0.058, 0.03])
        report = cousot.check(crossed)
        assert (1, 2) in report.vertical  # buy row 1 ask, sell row 2 bid

    def test_tolerance_flags_borderline(self):
        strikes = np.array([0.9, 1.0])
        # margin of the vertical inequality is exactly 1e-7
        panel = make_panel(strikes, [0.09, 0.1 - 1e-7], [0.1, 0.11])
        assert cousot.check(panel).clean
        report = cousot.check(panel, tol=1e-6)
        assert (0, 1) in report.vertical
