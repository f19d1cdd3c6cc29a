"""File formats: chain CSV, params JSON and the output CSV artifacts.

All numbers are written with 12 significant digits so repeated runs on
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .market import Chain, MarketParams, OptionKind, Quote

CHAIN_HEADER = ["kind", "strike", "bid", "ask", "bid_size", "ask_size"]


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def read_params(path: str | Path) -> MarketParams:
    """Read the side-car JSON {spot, rate, dividend_yield, maturity_years}."""
    with open(path) as fh:
        raw = json.load(fh)
    return MarketParams(
        spot=float(raw["spot"]),
        rate=float(raw["rate"]),
        dividend_yield=float(raw["dividend_yield"]),
        maturity=float(raw["maturity_years"]),
    )


def write_params(path: str | Path, params: MarketParams) -> None:
    payload = {
        "spot": params.spot,
        "rate": params.rate,
        "dividend_yield": params.dividend_yield,
        "maturity_years": params.maturity,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_chain(path: str | Path, params: MarketParams) -> Chain:
    """Read a chain CSV with header kind,strike,bid,ask,bid_size,ask_size."""
    quotes = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CHAIN_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"chain CSV missing columns: {sorted(missing)}")
        for row in reader:
            quotes.append(
                Quote(
                    strike=float(row["strike"]),
                    bid=float(row["bid"]),
                    ask=float(row["ask"]),
                    bid_size=float(row["bid_size"]),
                    ask_size=float(row["ask_size"]),
                    kind=OptionKind(row["kind"].strip().upper()),
                )
            )
    return Chain(params=params, quotes=tuple(quotes))


def write_chain(path: str | Path, chain: Chain) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CHAIN_HEADER)
        for q in chain.quotes:
            writer.writerow(
                [
                    q.kind.value,
                    _fmt(q.strike),
                    _fmt(q.bid),
                    _fmt(q.ask),
                    _fmt(q.bid_size),
                    _fmt(q.ask_size),
                ]
            )


def write_table(path: str | Path, header: list[str], rows) -> None:
    """Write a generic numeric CSV, formatting floats at 12 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [_fmt(c) if isinstance(c, (int, float, np.floating)) else c for c in row]
            )


def write_density(path: str | Path, points: np.ndarray, p: np.ndarray) -> None:
    write_table(path, ["s", "p"], zip(points, p))


def read_density(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    s, p = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            s.append(float(row["s"]))
            p.append(float(row["p"]))
    return np.asarray(s), np.asarray(p)
