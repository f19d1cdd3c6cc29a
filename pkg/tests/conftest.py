from __future__ import annotations

import numpy as np
import pytest

from rndx import sedex, smile, synth
from rndx.market import MarketParams

from helpers import TICK


@pytest.fixture(scope="session")
def day_market() -> MarketParams:
    return MarketParams(spot=1.0, rate=0.0, dividend_yield=0.0, maturity=1 / 365)


@pytest.fixture(scope="session")
def frictionless_panel(day_market):
    return synth.heston_panel(day_market)


@pytest.fixture(scope="session")
def sigma_atm(frictionless_panel) -> float:
    return smile.atm_vol(frictionless_panel)


@pytest.fixture(scope="session")
def spread_model(day_market, sigma_atm) -> synth.SpreadModel:
    return synth.SpreadModel(
        s_peak=4 * TICK, s_base=TICK, h=sigma_atm * np.sqrt(day_market.maturity)
    )


@pytest.fixture(scope="session")
def bidask_panel(day_market, spread_model):
    return synth.heston_panel(day_market, spread_model=spread_model)


@pytest.fixture(scope="session")
def heston_grid(bidask_panel, sigma_atm):
    return sedex.build_grid(bidask_panel, sigma_atm)


@pytest.fixture(scope="session")
def heston_weights(sigma_atm, day_market):
    return sedex.reg_weights(sigma_atm, day_market.maturity)


@pytest.fixture(scope="session")
def bidask_density(bidask_panel, heston_grid, heston_weights):
    return sedex.extract(bidask_panel, heston_grid, heston_weights)
