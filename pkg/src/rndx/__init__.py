"""Bid-ask option-chain toolkit: executable-arbitrage filtering, entropic
risk-neutral density extraction, rate estimation and smile construction."""

from .market import (
    CallPanel,
    Chain,
    MarketParams,
    OptionKind,
    Quote,
    QuoteOrigin,
    denormalize,
    forward,
    normalize,
    unify_calls,
)
from .aries import ArbitrageSolution, Classification, Side, detect, filter_panel
from .cousot import ViolationReport, check
from .rates import ParityFit, fit_parity, parity_weights, synthetic_forward_bounds
from .sedex import (
    Density,
    DensityGrid,
    RegWeights,
    build_grid,
    extract,
    reg_weights,
    reprice,
    target_mesh,
)
from .bl import (
    AdmissibleCallVector,
    DiscreteMeasure,
    ExtendedCallVector,
    bl_seed,
    build_measure,
    extend_tail,
    find_admissible_vector,
    measure_to_density_seed,
)
from .smile import (
    SviParams,
    atm_vol,
    bs_price,
    envelope_report,
    implied_vol,
    smile_from_density,
    svi_eval,
    svi_fit,
)
from .synth import (
    HestonParams,
    SpreadModel,
    contaminate,
    cos_density,
    cos_price,
    heston_panel,
)

__version__ = "0.1.0"

__all__ = [
    "AdmissibleCallVector",
    "ArbitrageSolution",
    "CallPanel",
    "Chain",
    "Classification",
    "Density",
    "DensityGrid",
    "DiscreteMeasure",
    "ExtendedCallVector",
    "HestonParams",
    "MarketParams",
    "OptionKind",
    "ParityFit",
    "Quote",
    "QuoteOrigin",
    "RegWeights",
    "Side",
    "SpreadModel",
    "SviParams",
    "ViolationReport",
    "atm_vol",
    "bl_seed",
    "bs_price",
    "build_grid",
    "build_measure",
    "check",
    "contaminate",
    "cos_density",
    "cos_price",
    "denormalize",
    "detect",
    "envelope_report",
    "extend_tail",
    "extract",
    "filter_panel",
    "find_admissible_vector",
    "fit_parity",
    "forward",
    "heston_panel",
    "implied_vol",
    "measure_to_density_seed",
    "normalize",
    "parity_weights",
    "reg_weights",
    "reprice",
    "smile_from_density",
    "svi_eval",
    "svi_fit",
    "synthetic_forward_bounds",
    "target_mesh",
    "unify_calls",
]
