"""Core market data types: quotes, chains and the unified call panel.

All prices are plain floats; no tick rounding is ever applied internally.
Every type is an immutable value after construction and safe to share
across threads.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import NegativeSyntheticBid, ZeroSpot


class OptionKind(enum.Enum):
    CALL = "C"
    PUT = "P"


class QuoteOrigin(enum.IntEnum):
    """Where a call-panel entry came from."""

    NATIVE_CALL = 0
    SYNTHETIC_FROM_PUT = 1


@dataclass(frozen=True)
class Quote:
    """A single bid-ask observation for one strike.

    Sizes are quoted depths (contracts); they may be fractional, the
    downstream LP does not need integrality.
    """

    strike: float
    bid: float
    ask: float
    bid_size: float
    ask_size: float
    kind: OptionKind

    def __post_init__(self):
        vals = (self.strike, self.bid, self.ask, self.bid_size, self.ask_size)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite quote field: {self}")
        if self.strike <= 0.0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.bid > self.ask:
            raise ValueError(f"crossed quote: bid {self.bid} > ask {self.ask}")
        if self.bid_size < 0.0 or self.ask_size < 0.0:
            raise ValueError("quote sizes must be nonnegative")


@dataclass(frozen=True)
class MarketParams:
    """Spot level, continuously compounded rates and year-fraction maturity."""

    spot: float
    rate: float
    dividend_yield: float
    maturity: float

    def __post_init__(self):
        if not (math.isfinite(self.spot) and self.spot > 0.0):
            raise ValueError(f"spot must be positive, got {self.spot}")
        if self.maturity <= 0.0:
            raise ValueError(f"maturity must be positive, got {self.maturity}")
        if self.rate < 0.0 or self.dividend_yield < 0.0:
            raise ValueError("rate and dividend yield must be nonnegative")

    @property
    def discount(self) -> float:
        """e^{-rT}."""
        return math.exp(-self.rate * self.maturity)

    @property
    def carry_discount(self) -> float:
        """e^{-qT}, the cost of one unit of the underlying per unit spot."""
        return math.exp(-self.dividend_yield * self.maturity)


def forward(params: MarketParams) -> float:
    """Forward level S0 * exp((r - q) * T)."""
    return params.spot * math.exp(
        (params.rate - params.dividend_yield) * params.maturity
    )


@dataclass(frozen=True)
class Chain:
    """An option chain for a single maturity.

    ``scale`` is the multiplicative factor that maps prices and strikes
    back to their original units (1.0 for a chain in native units).
    """

    params: MarketParams
    quotes: tuple[Quote, ...]
    scale: float = 1.0

    def __post_init__(self):
        ordered = tuple(sorted(self.quotes, key=lambda q: (q.strike, q.kind.value)))
        object.__setattr__(self, "quotes", ordered)
        keys = [(q.strike, q.kind) for q in ordered]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (strike, kind) entries in chain")

    def calls(self) -> tuple[Quote, ...]:
        return tuple(q for q in self.quotes if q.kind is OptionKind.CALL)

    def puts(self) -> tuple[Quote, ...]:
        return tuple(q for q in self.quotes if q.kind is OptionKind.PUT)


def _readonly(a) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CallPanel:
    """Unified call-only panel in units of spot (spot normalized to 1).

    Entries are sorted by strike; a native call and a put-implied
    synthetic call may share a strike and are kept as two rows. The
    fictitious strike-zero call is never materialized: code that needs
    it derives ``S0 * exp(-qT)`` from ``params``.
    """

    params: MarketParams
    strikes: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    bid_size: np.ndarray
    ask_size: np.ndarray
    origin: tuple[QuoteOrigin, ...]
    scale: float = 1.0

    def __post_init__(self):
        for name in ("strikes", "bid", "ask", "bid_size", "ask_size"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        object.__setattr__(self, "origin", tuple(self.origin))
        n = len(self.strikes)
        if not all(
            len(getattr(self, f)) == n
            for f in ("bid", "ask", "bid_size", "ask_size", "origin")
        ):
            raise ValueError("panel arrays must have equal length")
        if abs(self.params.spot - 1.0) > 1e-12:
            raise ValueError("panel requires a normalized chain (spot == 1)")
        if np.any(np.diff(self.strikes) < 0):
            raise ValueError("panel strikes must be sorted ascending")
        if np.any(self.bid > self.ask):
            raise ValueError("crossed panel quote")

    def __len__(self) -> int:
        return len(self.strikes)

    @property
    def mids(self) -> np.ndarray:
        return (self.bid + self.ask) / 2.0

    def drop(self, index: int) -> "CallPanel":
        keep = np.ones(len(self), dtype=bool)
        keep[index] = False
        return self.take(keep)

    def take(self, mask) -> "CallPanel":
        mask = np.asarray(mask)
        return replace(
            self,
            strikes=self.strikes[mask],
            bid=self.bid[mask],
            ask=self.ask[mask],
            bid_size=self.bid_size[mask],
            ask_size=self.ask_size[mask],
            origin=tuple(o for o, m in zip(self.origin, mask) if m),
        )


def normalize(chain: Chain) -> Chain:
    """Rescale the chain to units of spot (spot becomes 1, sizes unchanged).

    Idempotent; the accumulated denormalization factor is kept in
    ``scale`` so that ``denormalize`` recovers the original units.
    """
    s0 = chain.params.spot
    if s0 <= 0.0:
        raise ZeroSpot(f"cannot normalize chain with spot {s0}")
    if s0 == 1.0:
        return chain
    quotes = tuple(
        replace(q, strike=q.strike / s0, bid=q.bid / s0, ask=q.ask / s0)
        for q in chain.quotes
    )
    params = replace(chain.params, spot=1.0)
    return Chain(params=params, quotes=quotes, scale=chain.scale * s0)


def denormalize(chain: Chain) -> Chain:
    """Undo ``normalize``: map strikes and prices back to original units."""
    s = chain.scale
    if s == 1.0:
        return chain
    quotes = tuple(
        replace(q, strike=q.strike * s, bid=q.bid * s, ask=q.ask * s)
        for q in chain.quotes
    )
    params = replace(chain.params, spot=chain.params.spot * s)
    return Chain(params=params, quotes=quotes, scale=1.0)


def unify_calls(chain: Chain) -> CallPanel:
    """Map a normalized call/put chain onto a single family of call bounds.

    Each put with bounds [Pb, Pa] at strike K becomes a synthetic call
    with bounds [Pb + e^{-rT}(F - K), Pa + e^{-rT}(F - K)]; native calls
    pass through unchanged. The output keeps one row per input quote,
    sorted by strike with native calls before synthetics at ties.
    """
    if abs(chain.params.spot - 1.0) > 1e-12:
        raise ValueError("unify_calls expects a normalized chain; call normalize()")
    fwd = forward(chain.params)
    disc = chain.params.discount

    rows = []
    for q in chain.quotes:
        if q.kind is OptionKind.CALL:
            rows.append(
                (q.strike, QuoteOrigin.NATIVE_CALL, q.bid, q.ask, q.bid_size, q.ask_size)
            )
        else:
            shift = disc * (fwd - q.strike)
            lo, hi = q.bid + shift, q.ask + shift
            if lo < 0.0:
                warnings.warn(
                    f"synthetic call bid {lo:.3e} < 0 at strike {q.strike}",
                    NegativeSyntheticBid,
                    stacklevel=2,
                )
            rows.append(
                (q.strike, QuoteOrigin.SYNTHETIC_FROM_PUT, lo, hi, q.bid_size, q.ask_size)
            )
    rows.sort(key=lambda r: (r[0], r[1]))

    return CallPanel(
        params=chain.params,
        strikes=[r[0] for r in rows],
        bid=[r[2] for r in rows],
        ask=[r[3] for r in rows],
        bid_size=[r[4] for r in rows],
        ask_size=[r[5] for r in rows],
        origin=tuple(r[1] for r in rows),
        scale=chain.scale,
    )
