"""Executable static-arbitrage detection and iterative quote removal.

The detector maximizes the upfront cash of a static portfolio (long
calls at ask, short at bid, an underlying leg and a cash leg) subject
to a nonnegative terminal payoff in every state and the quoted depth
limits. Because the payoff is piecewise linear in the terminal spot,
state-by-state nonnegativity reduces to one row per quoted strike plus
a zero-state row and an asymptotic-slope row, giving a finite LP.

Classification of the optimum:

* objective > 0: strong arbitrage (cash in now, nonnegative payoff);
* objective = 0 with a maximizer whose payoff is not identically zero:
  weak arbitrage;
* otherwise the null portfolio is the unique optimum and the panel is
  arbitrage-free.

The zero-objective split cannot be read off a single solver solution:
when the optimum is 0 the solver may legitimately return the null
vertex even though the optimal face contains a weak arbitrage. We
therefore resolve it with a second LP that maximizes the total payoff
mass (payoff summed over all breakpoints plus the asymptotic slope)
over the optimal face; weak arbitrage exists iff that maximum is
positive.

The filter loop removes, at each detection, the quote with the
smallest saturated depth among those whose depth limit binds, and
repeats until the detector reports no arbitrage.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidSizes, SolverFailure
from .market import CallPanel, QuoteOrigin

#: classification tolerance on the normalized (spot = 1) price scale
TOL = 1e-9


class Classification(enum.Enum):
    STRONG = "strong"
    WEAK = "weak"
    NO_ARBITRAGE = "no_arbitrage"


class Side(enum.Enum):
    ASK = "ask"
    BID = "bid"


@dataclass(frozen=True)
class LpInstance:
    """Matrices of the detection LP in the variable order (q_ask, q_bid, u, alpha).

    ``a_ge x >= 0`` stacks the payoff rows at each quoted strike followed
    by the asymptotic-slope row; the zero-state row is equivalent to the
    bound alpha <= 0. ``c`` is the minimization objective, i.e. the
    negated cash intake.
    """

    strikes: np.ndarray
    c: np.ndarray
    a_ge: np.ndarray
    bounds: list[tuple[float | None, float | None]]
    q_ask_max: np.ndarray
    q_bid_max: np.ndarray
    erT: float
    carry_cost: float  # cost of one unit of underlying, S0*exp(-qT)

    @property
    def n(self) -> int:
        return len(self.strikes)


@dataclass(frozen=True)
class ArbitrageSolution:
    q_ask: np.ndarray
    q_bid: np.ndarray
    u: float
    alpha: float
    objective: float
    classification: Classification
    binding: tuple[tuple[int, Side], ...]
    lambda_bar: float | None = None

    @property
    def is_zero(self) -> bool:
        return (
            not np.any(self.q_ask)
            and not np.any(self.q_bid)
            and self.u == 0.0
            and self.alpha == 0.0
        )


@dataclass(frozen=True)
class Removal:
    iteration: int
    strike: float
    side: Side
    size: float
    classification: Classification
    objective: float
    origin: QuoteOrigin


RemovalLog = tuple[Removal, ...]


def build_lp(panel: CallPanel) -> LpInstance:
    """Assemble the detection LP for a normalized call panel."""
    n = len(panel)
    if n < 1:
        raise ValueError("panel must contain at least one quote")
    sizes = np.concatenate([panel.ask_size, panel.bid_size])
    if np.any(~np.isfinite(sizes)) or np.any(sizes < 0):
        raise InvalidSizes("quoted sizes must be finite and nonnegative")

    k = panel.strikes
    erT = math.exp(panel.params.rate * panel.params.maturity)
    carry = panel.params.carry_discount  # spot is 1 after normalization

    # payoff at s = K_j: sum_{i<=j} (q_ask_i - q_bid_i) (K_j - K_i) + u K_j - alpha e^{rT}
    gaps = np.maximum(k[:, None] - k[None, :], 0.0)  # gaps[j, i] = (K_j - K_i)_+
    payoff = np.zeros((n, 2 * n + 2))
    payoff[:, :n] = gaps
    payoff[:, n : 2 * n] = -gaps
    payoff[:, 2 * n] = k
    payoff[:, 2 * n + 1] = -erT

    slope = np.zeros(2 * n + 2)
    slope[:n] = 1.0
    slope[n : 2 * n] = -1.0
    slope[2 * n] = 1.0

    a_ge = np.vstack([payoff, slope])

    # minimize c @ x  <=>  maximize cash intake
    c = np.concatenate([panel.ask, -panel.bid, [carry, -1.0]])

    bounds: list[tuple[float | None, float | None]] = (
        [(0.0, float(q)) for q in panel.ask_size]
        + [(0.0, float(q)) for q in panel.bid_size]
        + [(None, None), (None, 0.0)]
    )
    return LpInstance(
        strikes=k,
        c=c,
        a_ge=a_ge,
        bounds=bounds,
        q_ask_max=panel.ask_size,
        q_bid_max=panel.bid_size,
        erT=erT,
        carry_cost=carry,
    )


def payoff_profile(
    lp: LpInstance, q_ask: np.ndarray, q_bid: np.ndarray, u: float, alpha: float
) -> tuple[np.ndarray, float, float]:
    """Terminal payoff at the breakpoints {K_1..K_N}, at s=0, and the slope at infinity."""
    x = np.concatenate([q_ask, q_bid, [u, alpha]])
    rows = lp.a_ge @ x
    return rows[:-1], -alpha * lp.erT, float(rows[-1])


def _solve(lp: LpInstance, c: np.ndarray, extra_row=None) -> np.ndarray:
    a_ub = -lp.a_ge
    b_ub = np.zeros(a_ub.shape[0])
    if extra_row is not None:
        a_ub = np.vstack([a_ub, extra_row])
        b_ub = np.append(b_ub, 0.0)
    # the dual simplex occasionally gives up on highly degenerate panels;
    # dropping presolve or switching to the interior-point method with
    # crossover resolves those instances while still returning a basic
    # optimal solution
    attempts = (
        {"method": "highs", "options": None},
        {"method": "highs", "options": {"presolve": False}},
        {"method": "highs-ipm", "options": None},
    )
    res = None
    for attempt in attempts:
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=lp.bounds,
                      method=attempt["method"], options=attempt["options"])
        if res.status == 0:
            return res.x
    raise SolverFailure(f"arbitrage LP ended with status {res.status}: {res.message}")


def _canonicalize(x: np.ndarray, n: int) -> np.ndarray:
    """Remove per-strike round trips: subtract min(q_ask, q_bid) from both legs."""
    out = x.copy()
    m = np.minimum(out[:n], out[n : 2 * n])
    out[:n] -= m
    out[n : 2 * n] -= m
    # basic solutions carry O(solver tol) noise; clip tiny negatives
    out[: 2 * n] = np.maximum(out[: 2 * n], 0.0)
    return out


def _lambda_bar(x: np.ndarray, lp: LpInstance) -> float:
    n = lp.n
    ratios = []
    qa, qb = x[:n], x[n : 2 * n]
    live_a = qa > 0
    live_b = qb > 0
    if np.any(live_a):
        ratios.append(np.min(lp.q_ask_max[live_a] / qa[live_a]))
    if np.any(live_b):
        ratios.append(np.min(lp.q_bid_max[live_b] / qb[live_b]))
    if not ratios:
        raise SolverFailure("cannot rescale a solution with no executed quantity")
    return float(min(ratios))


def _binding_set(x: np.ndarray, lp: LpInstance, tol: float) -> list[tuple[int, Side]]:
    n = lp.n
    out = []
    for i in range(n):
        cap = lp.q_ask_max[i]
        if cap > 0 and x[i] >= cap - tol * max(1.0, cap):
            out.append((i, Side.ASK))
        cap = lp.q_bid_max[i]
        if cap > 0 and x[n + i] >= cap - tol * max(1.0, cap):
            out.append((i, Side.BID))
    return out


def detect(panel: CallPanel, tol: float = TOL) -> ArbitrageSolution:
    """Classify the panel and return the optimal executable portfolio.

    Strong and weak solutions are returned in canonical form (no
    round trips) and, in the weak case, rescaled to the largest multiple
    the quoted depths allow, which guarantees a nonempty binding set.
    """
    if len(panel) == 0:
        return ArbitrageSolution(
            q_ask=np.zeros(0),
            q_bid=np.zeros(0),
            u=0.0,
            alpha=0.0,
            objective=0.0,
            classification=Classification.NO_ARBITRAGE,
            binding=(),
        )
    lp = build_lp(panel)
    n = lp.n

    x = _solve(lp, lp.c)
    objective = float(-lp.c @ x)
    x = _canonicalize(x, n)

    if objective > tol:
        binding = _binding_set(x, lp, tol)
        if not binding:
            # interior representation of the optimum; push to the boundary
            x = _lambda_bar(x, lp) * x
            binding = _binding_set(x, lp, tol)
        if not binding:
            raise SolverFailure("strong arbitrage without a saturated depth bound")
        return ArbitrageSolution(
            q_ask=x[:n],
            q_bid=x[n : 2 * n],
            u=float(x[2 * n]),
            alpha=float(x[2 * n + 1]),
            objective=objective,
            classification=Classification.STRONG,
            binding=tuple(binding),
        )

    # objective == 0 within tolerance: decide weak vs none on the optimal
    # face {cash intake >= 0} by maximizing the total payoff mass
    g = np.sum(lp.a_ge, axis=0)
    g[2 * n + 1] -= lp.erT  # payoff at s = 0
    x2 = _solve(lp, -g, extra_row=lp.c)
    mass = float(g @ x2)
    if mass <= tol:
        return ArbitrageSolution(
            q_ask=np.zeros(n),
            q_bid=np.zeros(n),
            u=0.0,
            alpha=0.0,
            objective=0.0,
            classification=Classification.NO_ARBITRAGE,
            binding=(),
        )

    x2 = _canonicalize(x2, n)
    lam = _lambda_bar(x2, lp)
    x2 = lam * x2
    binding = _binding_set(x2, lp, tol)
    if not binding:
        raise SolverFailure("weak arbitrage without a saturated depth bound")
    return ArbitrageSolution(
        q_ask=x2[:n],
        q_bid=x2[n : 2 * n],
        u=float(x2[2 * n]),
        alpha=float(x2[2 * n + 1]),
        objective=0.0,
        classification=Classification.WEAK,
        binding=tuple(binding),
        lambda_bar=lam,
    )


def _pick_removal(panel: CallPanel, sol: ArbitrageSolution) -> tuple[int, Side, float]:
    """Smallest saturated depth wins; ties go to the lowest strike, then Ask."""
    best = None
    for i, side in sol.binding:
        size = panel.ask_size[i] if side is Side.ASK else panel.bid_size[i]
        key = (size, panel.strikes[i], 0 if side is Side.ASK else 1)
        if best is None or key < best[0]:
            best = (key, i, side, size)
    assert best is not None
    return best[1], best[2], best[3]


def filter_panel(panel: CallPanel, tol: float = TOL) -> tuple[CallPanel, RemovalLog]:
    """Iteratively remove arbitrage-supporting quotes until none remain.

    Each iteration runs the detector; on a strong or weak finding the
    quote with the smallest saturated size is dropped (whole quote, both
    sides). Terminates after at most N iterations.
    """
    current = panel
    log: list[Removal] = []
    for iteration in range(len(panel) + 1):
        sol = detect(current, tol=tol)
        if sol.classification is Classification.NO_ARBITRAGE:
            return current, tuple(log)
        idx, side, size = _pick_removal(current, sol)
        log.append(
            Removal(
                iteration=iteration,
                strike=float(current.strikes[idx]),
                side=side,
                size=float(size),
                classification=sol.classification,
                objective=sol.objective,
                origin=current.origin[idx],
            )
        )
        current = current.drop(idx)
    raise SolverFailure("arbitrage filter failed to terminate")  # pragma: no cover
