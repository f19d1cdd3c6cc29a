"""Command-line front end: stage commands plus the full pipeline.

Every command reads/writes the documented CSV/JSON contracts, works in
the input's price units (normalization is internal) and is
deterministic: identical inputs and flags produce byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import aries, bl, cousot, rates, sedex, smile, synth
from .errors import BarycenterViolated, RndxError, TailExceedsSupport
from .io import (
    read_chain,
    read_density,
    read_params,
    write_chain,
    write_density,
    write_params,
    write_table,
)
from .market import (
    CallPanel,
    Chain,
    MarketParams,
    OptionKind,
    Quote,
    QuoteOrigin,
    forward,
    normalize,
    unify_calls,
)


def _load(args) -> tuple[Chain, MarketParams]:
    params = read_params(args.params)
    chain = read_chain(args.chain, params)
    return chain, params


def _panel(chain: Chain) -> CallPanel:
    return unify_calls(normalize(chain))


def _sigma_atm(panel: CallPanel, override: float | None) -> float:
    return override if override is not None else smile.atm_vol(panel)


def _grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kappa1", type=float, default=1.50,
                        help="strike-range extension factor (default %(default)s)")
    parser.add_argument("--kappa2", type=float, default=10.0,
                        help="lognormal support bound in total-vol units (default %(default)s)")
    parser.add_argument("--delta", type=float, default=0.005,
                        help="probability increment for the target mesh (default %(default)s)")
    parser.add_argument("--sigma-atm", type=float, default=None,
                        help="override the at-the-money vol used for grid sizing")
    parser.add_argument("--lower-truncate", action="store_true",
                        help="truncate the lower support end as well (default off)")


def cmd_rates(args) -> int:
    chain, params = _load(args)
    fit = rates.fit_parity(normalize(chain), alpha=args.alpha, upsilon=args.upsilon)
    scale = params.spot
    print(json.dumps({
        "r": fit.rate,
        "q": fit.dividend_yield,
        "beta0": fit.beta0 * scale,
        "beta1": fit.beta1,
        "n_strikes": fit.n_strikes,
    }, indent=2))
    return 0


def cmd_check(args) -> int:
    chain, _ = _load(args)
    panel = _panel(chain)
    report = cousot.check(panel, include_strike_zero=args.include_strike_zero,
                          tol=args.tol)
    print(f"{'family':<12}{'violations':>12}{'checked':>12}")
    for fam, (bad, total) in report.counts().items():
        print(f"{fam:<12}{bad:>12}{total:>12}")
    if args.list:
        rows = []
        rows += [("positivity", i, "", "") for i in report.positivity]
        rows += [("lower_bound", i, "", "") for i in report.lower_bound]
        rows += [("vertical", i, j, "") for i, j in report.vertical]
        rows += [("butterfly", i, j, k) for i, j, k in report.butterfly]
        write_table(args.list, ["family", "i", "j", "k"], rows)
    return 0 if report.clean else 3


def _drop_removed(chain: Chain, log) -> Chain:
    """Map removed panel rows back to (strike, kind) quotes of the chain."""
    scale = chain.params.spot
    removed = [
        (entry.strike,
         OptionKind.CALL if entry.origin is QuoteOrigin.NATIVE_CALL else OptionKind.PUT)
        for entry in log
    ]
    kept = []
    for q in chain.quotes:
        k_norm = q.strike / scale
        gone = any(
            abs(k_norm - ks) <= 1e-9 * max(1.0, abs(ks)) and q.kind is kind
            for ks, kind in removed
        )
        if not gone:
            kept.append(q)
    return Chain(params=chain.params, quotes=tuple(kept), scale=chain.scale)


def cmd_filter(args) -> int:
    chain, _ = _load(args)
    panel = _panel(chain)
    clean_panel, log = aries.filter_panel(panel)
    scale = chain.params.spot
    write_table(
        args.log,
        ["iteration", "strike", "side", "size", "classification", "objective"],
        [
            (r.iteration, r.strike * scale, r.side.value, r.size,
             r.classification.value, r.objective * scale)
            for r in log
        ],
    )
    write_chain(args.out, _drop_removed(chain, log))
    print(f"removed {len(log)} of {len(panel)} quotes")
    return 0


def _run_extract(panel, args, seed_vec=None):
    sigma = _sigma_atm(panel, args.sigma_atm)
    grid = sedex.build_grid(panel, sigma, kappa1=args.kappa1, kappa2=args.kappa2,
                            delta=args.delta, lower_truncate=args.lower_truncate)
    weights = sedex.reg_weights(sigma, panel.params.maturity)
    seed = None
    if getattr(args, "warm_start", "none") == "bl":
        try:
            seed, _, _ = bl.bl_seed(panel, grid, xi=args.xi)
        except (TailExceedsSupport, BarycenterViolated) as exc:
            # the seed is an optional accelerator; flat or pinned tail
            # quotes can put the replicating measure off the grid
            print(f"warm start unavailable ({exc}); solving cold", file=sys.stderr)
    if seed_vec is not None:
        seed = seed_vec
    density = sedex.extract(panel, grid, weights, seed=seed)
    return density, grid, sigma


def _write_extract_outputs(args, panel, density, scale):
    write_density(args.density, density.grid.points * scale, density.p)
    if args.audit:
        model = sedex.reprice(density, panel.strikes, panel.params.rate,
                              panel.params.maturity)
        rows = [
            (k * scale, b * scale, m * scale, a * scale,
             max(0.0, b - m) * scale, max(0.0, m - a) * scale)
            for k, b, m, a in zip(panel.strikes, panel.bid, model, panel.ask)
        ]
        write_table(args.audit,
                    ["strike", "bid", "model", "ask", "slack_bid", "slack_ask"],
                    rows)


def cmd_extract(args) -> int:
    chain, params = _load(args)
    panel = _panel(chain)
    density, grid, _ = _run_extract(panel, args)
    _write_extract_outputs(args, panel, density, params.spot)
    print(f"grid: {grid.size} points at mesh {grid.mesh * params.spot:.6g}; "
          f"max quote violation {density.max_price_violation:.3g}")
    return 0


def _density_from_file(path, spot):
    s, p = read_density(path)
    s = s / spot
    mesh = float(np.median(np.diff(s)))
    start = int(round(s[0] / mesh))
    count = int(round(s[-1] / mesh))
    grid = sedex.DensityGrid(mesh=mesh, count=count, upper=count * mesh,
                             refinement=1, lattice_mesh=mesh, start=start)
    if len(grid.points) != len(p):
        raise RndxError("density file is not on a uniform grid")
    return sedex.Density(grid=grid, p=p, objective=float("nan"),
                         max_price_violation=float("nan"),
                         forward_error=float("nan"), mass_error=float("nan"))


def _smile_rows(points, svi_params, maturity):
    rows = []
    for pt in points:
        w = smile.svi_eval(svi_params, pt.log_moneyness) if svi_params else None
        iv_svi = (np.sqrt(max(w, 0.0) / maturity) if w is not None else None)
        dev_sedex = dev_svi = ""
        if pt.iv_bid is not None and pt.iv_ask is not None:
            if pt.iv_model is not None:
                dev_sedex = max(0.0, pt.iv_model - pt.iv_ask) + max(
                    0.0, pt.iv_bid - pt.iv_model)
            if iv_svi is not None:
                dev_svi = max(0.0, iv_svi - pt.iv_ask) + max(0.0, pt.iv_bid - iv_svi)
        rows.append((
            pt.strike,
            pt.log_moneyness,
            "" if pt.iv_bid is None else pt.iv_bid,
            "" if pt.iv_ask is None else pt.iv_ask,
            "" if pt.iv_model is None else pt.iv_model,
            "" if iv_svi is None else iv_svi,
            dev_sedex,
            dev_svi,
        ))
    return rows


def cmd_smile(args) -> int:
    chain, params = _load(args)
    panel = _panel(chain)
    density = _density_from_file(args.density, params.spot)
    fine = smile.fine_strike_grid(panel, density.grid.upper)
    points = smile.smile_from_density(density, fine, panel)

    svi_params = None
    if args.svi:
        mids = [(pt.log_moneyness, (pt.iv_bid + pt.iv_ask) / 2.0)
                for pt in points if pt.iv_bid is not None and pt.iv_ask is not None]
        if len(mids) >= 5:
            k, v = np.array(mids).T
            svi_params = smile.svi_fit(k, v, panel.params.maturity, seed=args.seed)

    scale = params.spot
    rows = _smile_rows(points, svi_params, panel.params.maturity)
    rows = [(r[0] * scale, *r[1:]) for r in rows]
    write_table(args.out,
                ["strike", "k", "iv_bid", "iv_ask", "iv_sedex", "iv_svi",
                 "dev_sedex", "dev_svi"],
                rows)
    return 0


def cmd_synth(args) -> int:
    if args.model != "heston":
        raise RndxError(f"unknown model {args.model!r}")
    params = read_params(args.params)
    with open(args.model_params) as fh:
        raw = json.load(fh)
    hparams = synth.HestonParams(
        v0=raw["v0"], theta=raw["theta"], kappa=raw["kappa"],
        sigma_vol=raw["sigma_vol"], rho=raw["rho"],
    )
    k_lo, k_hi, n_k = args.strikes
    bid_size, ask_size = args.sizes

    market = replace(params, spot=1.0)
    spread_model = None
    if args.spreads is not None:
        peak, base = args.spreads
        strikes = np.linspace(k_lo, k_hi, int(n_k))
        mids = synth.cos_price(strikes, hparams, market)
        sigma = smile.implied_vol(
            float(mids[np.argmin(np.abs(strikes - forward(market)))]),
            forward(market),
            float(strikes[np.argmin(np.abs(strikes - forward(market)))]),
            market.maturity, market.rate)
        spread_model = synth.SpreadModel(
            s_peak=peak, s_base=base,
            h=sigma * np.sqrt(market.maturity))
    panel = synth.heston_panel(market, hparams, k_lo=k_lo, k_hi=k_hi,
                               n_strikes=int(n_k), spread_model=spread_model,
                               bid_size=bid_size, ask_size=ask_size)
    if args.contaminate is not None:
        frac, mag, seed = args.contaminate
        panel = synth.contaminate(panel, frac, mag, int(seed))

    scale = params.spot
    quotes = tuple(
        Quote(strike=k * scale, bid=b * scale, ask=a * scale,
              bid_size=bs, ask_size=asz, kind=OptionKind.CALL)
        for k, b, a, bs, asz in zip(panel.strikes, panel.bid, panel.ask,
                                    panel.bid_size, panel.ask_size)
    )
    write_chain(args.out, Chain(params=params, quotes=quotes))
    if args.ref_density:
        s = np.linspace(k_lo * 0.9, k_hi * 1.1, 4001)
        f = synth.cos_density(s, hparams, market)
        write_table(args.ref_density, ["s", "f"], zip(s * scale, f / scale))
    print(f"wrote {len(panel)}-strike chain to {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    chain, params = _load(args)

    summary: dict = {}

    def stage(name):
        print(f"[{name}]", flush=True)

    stage("rates")
    if args.no_rates:
        fitted = params
    else:
        fit = rates.fit_parity(normalize(chain), alpha=args.alpha)
        fitted = replace(params, rate=fit.rate, dividend_yield=fit.dividend_yield)
        summary["rates"] = {"r": fit.rate, "q": fit.dividend_yield,
                            "n_strikes": fit.n_strikes}
    chain = Chain(params=fitted, quotes=chain.quotes, scale=chain.scale)
    write_params(outdir / "params_fitted.json", fitted)

    stage("unify")
    panel = _panel(chain)

    stage("check:pre")
    pre = cousot.check(panel, include_strike_zero=args.include_strike_zero)
    summary["cousot_pre"] = {k: list(v) for k, v in pre.counts().items()}

    stage("filter")
    clean_panel, log = aries.filter_panel(panel)
    scale = fitted.spot
    write_table(
        outdir / "removals.csv",
        ["iteration", "strike", "side", "size", "classification", "objective"],
        [(r.iteration, r.strike * scale, r.side.value, r.size,
          r.classification.value, r.objective * scale) for r in log],
    )
    write_chain(outdir / "chain_clean.csv", _drop_removed(chain, log))
    summary["removals"] = len(log)

    stage("check:post")
    post = cousot.check(clean_panel, include_strike_zero=args.include_strike_zero)
    summary["cousot_post"] = {k: list(v) for k, v in post.counts().items()}
    if not post.clean:
        raise RndxError(
            "internal consistency failure: filtered panel still violates "
            "the strict no-arbitrage checks"
        )

    stage("extract")
    args_ns = argparse.Namespace(
        kappa1=args.kappa1, kappa2=args.kappa2, delta=args.delta,
        sigma_atm=args.sigma_atm, lower_truncate=args.lower_truncate,
        warm_start=args.warm_start, xi=args.xi,
    )
    density, grid, sigma = _run_extract(clean_panel, args_ns)
    summary["grid"] = {"mesh": grid.mesh * scale, "points": grid.size,
                       "upper": grid.upper * scale}
    summary["sigma_atm"] = sigma
    summary["max_quote_violation"] = density.max_price_violation * scale
    write_density(outdir / "density.csv", density.grid.points * scale, density.p)

    stage("audit")
    model = sedex.reprice(density, clean_panel.strikes, fitted.rate,
                          fitted.maturity)
    write_table(
        outdir / "audit.csv",
        ["strike", "bid", "model", "ask", "slack_bid", "slack_ask"],
        [(k * scale, b * scale, m * scale, a * scale,
          max(0.0, b - m) * scale, max(0.0, m - a) * scale)
         for k, b, m, a in zip(clean_panel.strikes, clean_panel.bid, model,
                               clean_panel.ask)],
    )

    stage("smile")
    fine = smile.fine_strike_grid(clean_panel, grid.upper)
    points = smile.smile_from_density(density, fine, clean_panel)
    svi_params = None
    if not args.no_svi:
        mids = [(pt.log_moneyness, (pt.iv_bid + pt.iv_ask) / 2.0)
                for pt in points
                if pt.iv_bid is not None and pt.iv_ask is not None]
        if len(mids) >= 5:
            karr, varr = np.array(mids).T
            svi_params = smile.svi_fit(karr, varr, fitted.maturity,
                                       seed=args.seed)
            summary["svi"] = {
                "a": svi_params.a, "b": svi_params.b, "rho": svi_params.rho,
                "m": svi_params.m, "sigma": svi_params.sigma,
            }
    write_table(
        outdir / "smile.csv",
        ["strike", "k", "iv_bid", "iv_ask", "iv_sedex", "iv_svi",
         "dev_sedex", "dev_svi"],
        [(r[0] * scale, *r[1:])
         for r in _smile_rows(points, svi_params, fitted.maturity)],
    )

    stage("envelope")
    report = smile.envelope_report(points, svi_params, fitted.maturity)
    summary["envelope"] = {
        "max_dev_model": report.max_dev_model,
        "max_dev_svi": report.max_dev_svi,
    }
    write_table(
        outdir / "envelope.csv",
        ["strike", "dev_model_ask", "dev_model_bid", "dev_svi_ask",
         "dev_svi_bid"],
        [(r.strike * scale, r.dev_model_ask, r.dev_model_bid,
          "" if r.dev_svi_ask is None else r.dev_svi_ask,
          "" if r.dev_svi_bid is None else r.dev_svi_bid)
         for r in report.rows],
    )
    with open(outdir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"pipeline complete; artifacts in {outdir}")
    return 0


def _pair(text: str) -> tuple[float, float]:
    a, b = text.split(",")
    return float(a), float(b)


def _triple(text: str) -> tuple[float, float, float]:
    a, b, c = text.split(",")
    return float(a), float(b), float(c)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rndx",
        description="Filter executable arbitrage from a bid-ask option chain "
                    "and extract a risk-neutral density under the quote "
                    "constraints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def io_args(p, density_out=False):
        p.add_argument("--chain", required=True, help="chain CSV (kind,strike,bid,ask,bid_size,ask_size)")
        p.add_argument("--params", required=True, help="market params JSON")

    p = sub.add_parser("rates", help="estimate (r, q) from put-call parity")
    io_args(p)
    p.add_argument("--alpha", type=float, default=0.5,
                   help="weight mix between inverse-spread and ATM proximity (default %(default)s)")
    p.add_argument("--upsilon", type=float, default=None,
                   help="ATM proximity scale (default: min strike gap / spot)")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("check", help="strict bid-ask consistency checks")
    io_args(p)
    p.add_argument("--include-strike-zero", action="store_true",
                   help="add the fictitious strike-zero call to the spread families")
    p.add_argument("--tol", type=float, default=0.0,
                   help="flag margins within tol of zero as violations (default 0)")
    p.add_argument("--list", default=None, help="write the violating tuples to this CSV")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("filter", help="iteratively remove arbitrage-supporting quotes")
    io_args(p)
    p.add_argument("--out", required=True, help="cleaned chain CSV")
    p.add_argument("--log", required=True, help="removal log CSV")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("extract", help="extract the risk-neutral density")
    io_args(p)
    p.add_argument("--density", required=True, help="output density CSV (s,p)")
    p.add_argument("--audit", default=None, help="constraint audit CSV")
    p.add_argument("--warm-start", choices=["none", "bl"], default="none",
                   help="seed the solve from the replicating measure (default none)")
    p.add_argument("--xi", type=float, default=1.5,
                   help="tail extrapolation factor for the warm start (default %(default)s)")
    _grid_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("smile", help="implied-vol smile from a density file")
    io_args(p)
    p.add_argument("--density", required=True, help="density CSV from extract")
    p.add_argument("--out", required=True, help="smile CSV")
    p.add_argument("--svi", action="store_true", help="fit the five-parameter benchmark too")
    p.add_argument("--seed", type=int, default=0, help="multi-start seed (default 0)")
    p.set_defaults(func=cmd_smile)

    p = sub.add_parser("synth", help="generate a synthetic chain with known density")
    p.add_argument("--model", default="heston")
    p.add_argument("--model-params", required=True,
                   help="JSON with v0, theta, kappa, sigma_vol, rho")
    p.add_argument("--params", required=True, help="market params JSON")
    p.add_argument("--out", required=True, help="output chain CSV")
    p.add_argument("--ref-density", default=None, help="reference density CSV")
    p.add_argument("--strikes", type=_triple, default=(0.87, 1.03, 84),
                   help="lo,hi,count in units of spot (default %(default)s)")
    p.add_argument("--spreads", type=_pair, default=None,
                   help="peak,base absolute spreads in units of spot")
    p.add_argument("--sizes", type=_pair, default=(10.0, 10.0),
                   help="bid,ask quoted sizes (default %(default)s)")
    p.add_argument("--contaminate", type=_triple, default=None,
                   help="fraction,magnitude,seed arbitrage injection")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="run the full chain-to-smile pipeline")
    io_args(p)
    p.add_argument("--outdir", required=True, help="artifact directory")
    p.add_argument("--no-rates", action="store_true",
                   help="keep the rates from the params file")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--include-strike-zero", action="store_true")
    p.add_argument("--warm-start", choices=["none", "bl"], default="none")
    p.add_argument("--xi", type=float, default=1.5)
    p.add_argument("--no-svi", action="store_true", help="skip the benchmark fit")
    p.add_argument("--seed", type=int, default=0)
    _grid_args(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RndxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
