"""Discrete call-replicating measure: feasibility witness and warm start.

From an admissible call-price vector (strictly positive, decreasing,
convex, within the quotes) an atomic measure is built whose discounted
call expectations reproduce the vector exactly. Placed on grid nodes it
certifies that the extraction program is feasible and doubles as a
starting point for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .errors import BarycenterViolated, Infeasible, SolverFailure, TailExceedsSupport
from .market import CallPanel
from .sedex import DensityGrid


@dataclass(frozen=True)
class AdmissibleCallVector:
    """Prices at strikes 0 = K_0 < K_1 < ... < K_N with C_0 = S0 e^{-qT}."""

    strikes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        c = np.asarray(self.prices, dtype=float)
        k.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "prices", c)
        if k[0] != 0.0:
            raise ValueError("the vector must start at strike zero")
        if np.any(np.diff(k) <= 0):
            raise ValueError("strikes must be strictly increasing")
        if np.any(c <= 0):
            raise ValueError("admissible prices must be strictly positive")
        if np.any(np.diff(c) >= 0):
            raise ValueError("admissible prices must be strictly decreasing")
        slopes = np.diff(c) / np.diff(k)
        if np.any(np.diff(slopes) <= 0):
            raise ValueError("admissible prices must be strictly convex")


@dataclass(frozen=True)
class ExtendedCallVector:
    """An admissible vector augmented with a terminal strike priced at zero."""

    strikes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        c = np.asarray(self.prices, dtype=float)
        k.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "prices", c)
        if np.any(np.diff(k) <= 0):
            raise ValueError("strikes must be strictly increasing")
        if c[-1] != 0.0 or np.any(c[:-1] <= 0):
            raise ValueError("prices must be positive with a zero terminal entry")
        if np.any(np.diff(c) >= 0):
            raise ValueError("extended prices must remain strictly decreasing")
        slopes = np.diff(c) / np.diff(k)
        if np.any(np.diff(slopes) <= 0):
            raise ValueError("extended prices must remain strictly convex")


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atoms (support, weights) plus the construction intermediates."""

    support: np.ndarray
    weights: np.ndarray
    survival: np.ndarray
    left_mass: float
    barycenter: float

    def __post_init__(self):
        for name in ("support", "weights", "survival"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def find_admissible_vector(panel: CallPanel, margin: float = 1e-6) -> AdmissibleCallVector:
    """Search the bid-ask box for a strictly-shaped call-price vector.

    Solves a small QP: distance to the mids, subject to monotonicity,
    convexity and the first-interval slope bound, each with a strict
    margin of ``margin`` times the smallest strike gap. Infeasibility is
    a certificate of residual arbitrage in the panel.
    """
    uniq, inv = np.unique(panel.strikes, return_inverse=True)
    n = len(uniq)
    bid_eff = np.zeros(n)
    ask_eff = np.full(n, np.inf)
    for row, j in enumerate(inv):
        bid_eff[j] = max(bid_eff[j], panel.bid[row])
        ask_eff[j] = min(ask_eff[j], panel.ask[row])
    if np.any(bid_eff > ask_eff):
        raise Infeasible("overlapping quotes at a shared strike have empty intersection")

    params = panel.params
    c0 = params.spot * params.carry_discount
    k_full = np.concatenate([[0.0], uniq])
    eps = margin * float(np.min(np.diff(k_full)))

    c = cp.Variable(n)
    mids = (bid_eff + ask_eff) / 2.0
    full = cp.hstack([c0, c])
    gaps = np.diff(k_full)
    slopes = cp.multiply(1.0 / gaps, full[:-1] - full[1:])
    constraints = [
        c >= eps,
        c >= bid_eff,
        c <= ask_eff,
        full[:-1] - full[1:] >= eps,
        c0 - c[0] <= uniq[0] * params.discount - eps,
    ]
    if n >= 2:
        constraints.append(slopes[:-1] - slopes[1:] >= eps)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(c - mids)), constraints)
    problem.solve(solver=cp.CLARABEL)
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise Infeasible("no admissible call-price vector fits inside the quotes")
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise SolverFailure(f"admissible-vector QP returned {problem.status}")
    return AdmissibleCallVector(
        strikes=k_full, prices=np.concatenate([[c0], np.asarray(c.value, float)])
    )


def extend_tail(
    vector: AdmissibleCallVector, xi: float, grid: DensityGrid
) -> ExtendedCallVector:
    """Append a terminal strike where the extended vector reaches zero.

    The terminal strike extrapolates the last chord by the factor xi > 1
    (which preserves strict monotonicity and convexity) and is snapped up
    to the nearest grid node.
    """
    if xi <= 1.0:
        raise ValueError(f"xi must exceed 1, got {xi}")
    k, c = vector.strikes, vector.prices
    last_slope = (c[-2] - c[-1]) / (k[-1] - k[-2])
    k_term = k[-1] + xi * c[-1] / last_slope
    idx = math.ceil(k_term / grid.mesh * (1.0 - 1e-12))
    k_term = idx * grid.mesh
    if k_term >= grid.upper:
        raise TailExceedsSupport(
            f"terminal strike {k_term} reaches the grid end {grid.upper}; "
            "enlarge the support or reduce xi"
        )
    return ExtendedCallVector(
        strikes=np.append(k, k_term), prices=np.append(c, 0.0)
    )


def build_measure(
    extended: ExtendedCallVector, k_prime: float, rate: float, maturity: float
) -> DiscreteMeasure:
    """Atomic measure on {K', K_1, ..., K_terminal} replicating the vector.

    The chord slopes give the survival function of the piecewise-linear
    price curve's second derivative; the strike-zero atom is relocated to
    the interior point K' while preserving mass and first moment, which
    requires K' below the conditional barycenter of the two left atoms.
    """
    k, c = extended.strikes, extended.prices
    if c[-1] != 0.0:
        raise ValueError("the extended vector must end at a zero price")
    n_quoted = len(k) - 2  # quoted strikes K_1..K_N
    if n_quoted < 1:
        raise ValueError("need at least one quoted strike")
    erT = math.exp(rate * maturity)

    survival = erT * (c[:-1] - c[1:]) / (k[1:] - k[:-1])  # Q_0 .. Q_N
    if survival[0] >= 1.0 or survival[-1] <= 0.0 or np.any(np.diff(survival) >= 0):
        raise ValueError("survival sequence is not strictly decreasing in (0, 1)")

    left_mass = 1.0 - survival[1]
    barycenter = (survival[0] - survival[1]) * k[1] / (1.0 - survival[1])
    if not 0.0 < k_prime < k[1]:
        raise ValueError(f"relocation point {k_prime} must lie in (0, {k[1]})")
    if k_prime >= barycenter:
        raise BarycenterViolated(
            f"relocation point {k_prime} is not below the barycenter {barycenter}"
        )

    w0 = left_mass * (k[1] - barycenter) / (k[1] - k_prime)
    w1 = left_mass * (barycenter - k_prime) / (k[1] - k_prime)
    upper = -np.diff(survival[1:])  # atoms at K_2 .. K_N
    weights = np.concatenate([[w0, w1], upper, [survival[-1]]])
    support = np.concatenate([[k_prime], k[1:]])
    return DiscreteMeasure(
        support=support,
        weights=weights,
        survival=survival,
        left_mass=left_mass,
        barycenter=barycenter,
    )


def default_k_prime(grid: DensityGrid, barycenter: float, k_first: float) -> float:
    """Largest grid node at least one mesh below min(barycenter, K_1)."""
    cap = min(barycenter, k_first) - grid.mesh
    idx = math.ceil(cap / grid.mesh * (1.0 + 1e-12)) - 1
    if idx < grid.start:
        raise BarycenterViolated(
            "no grid node fits strictly below the barycenter; refine the grid"
        )
    return idx * grid.mesh


def measure_prices(measure: DiscreteMeasure, strikes, rate: float, maturity: float):
    """Discounted call expectations of the atomic measure."""
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    pay = np.maximum(measure.support[None, :] - strikes[:, None], 0.0)
    return math.exp(-rate * maturity) * (pay @ measure.weights)


def measure_to_density_seed(measure: DiscreteMeasure, grid: DensityGrid) -> np.ndarray:
    """Place the atoms on their grid nodes; zero elsewhere."""
    p0 = np.zeros(grid.size)
    for k, w in zip(measure.support, measure.weights):
        p0[grid.index_of(float(k))] += w
    return p0


def bl_seed(
    panel: CallPanel,
    grid: DensityGrid,
    xi: float = 1.5,
    margin: float = 1e-6,
    k_prime: float | None = None,
) -> tuple[np.ndarray, DiscreteMeasure, ExtendedCallVector]:
    """Admissible vector -> tail extension -> measure -> grid density."""
    params = panel.params
    vector = find_admissible_vector(panel, margin=margin)
    extended = extend_tail(vector, xi=xi, grid=grid)
    if k_prime is None:
        erT = math.exp(params.rate * params.maturity)
        k, c = extended.strikes, extended.prices
        q0 = erT * (c[0] - c[1]) / (k[1] - k[0])
        q1 = erT * (c[1] - c[2]) / (k[2] - k[1])
        barycenter = (q0 - q1) * k[1] / (1.0 - q1)
        k_prime = default_k_prime(grid, barycenter, float(k[1]))
    measure = build_measure(extended, k_prime, params.rate, params.maturity)
    seed = measure_to_density_seed(measure, grid)
    return seed, measure, extended
