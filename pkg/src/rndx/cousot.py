"""Model-free strict bid-ask consistency checks on a call panel.

Four families of executable-price inequalities must hold strictly for
the panel to be free of static arbitrage: positivity of asks, positive
vertical-spread cost over every strike pair, positive butterfly cost
over every strike triple, and the discounted-intrinsic lower bound.
These run independently of the LP-based filter and are used to
cross-validate it.

A panel may quote one strike twice (a native call next to a
put-implied synthetic). The spread families then use the executable
extremes, the lowest ask and the highest bid per strike, and a
same-strike pair is additionally flagged when one instrument's ask
drops strictly below another's bid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .market import CallPanel, forward


@dataclass(frozen=True)
class ViolationReport:
    positivity: list[int]
    lower_bound: list[int]
    vertical: list[tuple[int, int]]
    butterfly: list[tuple[int, int, int]]
    totals_checked: dict[str, int] = field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return not (
            self.positivity or self.lower_bound or self.vertical or self.butterfly
        )

    def counts(self) -> dict[str, tuple[int, int]]:
        """(violations, checked) per family."""
        return {
            "positivity": (len(self.positivity), self.totals_checked["positivity"]),
            "lower_bound": (len(self.lower_bound), self.totals_checked["lower_bound"]),
            "vertical": (len(self.vertical), self.totals_checked["vertical"]),
            "butterfly": (len(self.butterfly), self.totals_checked["butterfly"]),
        }


def check(
    panel: CallPanel,
    include_strike_zero: bool = False,
    tol: float = 0.0,
) -> ViolationReport:
    """Report every strict-inequality failure on the panel.

    An expression that should be strictly positive counts as violated
    when it is <= tol. The default tol = 0 is exact strictness; a small
    positive tol additionally flags borderline quotes whose margin is
    within tol of zero.

    With ``include_strike_zero`` a fictitious entry at strike 0 with
    bid = ask = S0*exp(-qT) joins the vertical and butterfly families;
    it is reported as index -1 in the violation tuples. The positivity
    and lower-bound families always range over quoted rows only (the
    strike-zero entry meets its lower bound with equality by
    construction, which strictness would misreport). Reported indices
    are panel row indices; at a doubly quoted strike they point at the
    instrument with the executable extreme.
    """
    params = panel.params
    disc = params.discount
    fwd = forward(params)
    n_rows = len(panel)

    positivity = [i for i in range(n_rows) if panel.ask[i] <= tol]
    intrinsic = disc * fwd - panel.strikes * disc
    lower_bound = [i for i in range(n_rows) if panel.ask[i] - intrinsic[i] <= tol]

    # executable extremes per distinct strike
    uniq, inv = np.unique(panel.strikes, return_inverse=True)
    n_uniq = len(uniq)
    ask_eff = np.full(n_uniq, np.inf)
    bid_eff = np.full(n_uniq, -np.inf)
    ask_row = np.zeros(n_uniq, dtype=int)
    bid_row = np.zeros(n_uniq, dtype=int)
    for row, g in enumerate(inv):
        if panel.ask[row] < ask_eff[g]:
            ask_eff[g] = panel.ask[row]
            ask_row[g] = row
        if panel.bid[row] > bid_eff[g]:
            bid_eff[g] = panel.bid[row]
            bid_row[g] = row

    # crossing instruments at a shared strike: a zero-payoff round trip
    # with strictly negative cost
    vertical: list[tuple[int, int]] = []
    n_cross = 0
    for g in range(n_uniq):
        if ask_row[g] != bid_row[g]:
            n_cross += 1
            if ask_eff[g] - bid_eff[g] < -tol:
                vertical.append((int(ask_row[g]), int(bid_row[g])))

    strikes = uniq
    ask = ask_eff
    bid = bid_eff
    rows_a = ask_row
    rows_b = bid_row
    if include_strike_zero:
        c0 = disc * fwd  # equals S0*exp(-qT)
        strikes = np.concatenate([[0.0], strikes])
        ask = np.concatenate([[c0], ask])
        bid = np.concatenate([[c0], bid])
        rows_a = np.concatenate([[-1], rows_a])
        rows_b = np.concatenate([[-1], rows_b])

    n = len(strikes)

    # vertical: ask_i - bid_j > 0 for all i < j
    ii, jj = np.triu_indices(n, k=1)
    vert_bad = (ask[ii] - bid[jj]) <= tol
    vertical.extend(
        (int(rows_a[i]), int(rows_b[j])) for i, j in zip(ii[vert_bad], jj[vert_bad])
    )

    # butterfly: (ask_i - bid_j)/(K_j - K_i) - (bid_j - ask_k)/(K_k - K_j) > 0
    # for all i < j < k; loop over j, broadcast the (i, k) block
    butterfly: list[tuple[int, int, int]] = []
    n_butterfly = 0
    for j in range(1, n - 1):
        left = (ask[:j] - bid[j]) / (strikes[j] - strikes[:j])
        right = (bid[j] - ask[j + 1 :]) / (strikes[j + 1 :] - strikes[j])
        cost = left[:, None] - right[None, :]
        n_butterfly += cost.size
        bad_i, bad_k = np.nonzero(cost <= tol)
        butterfly.extend(
            (int(rows_a[i]), int(rows_b[j]), int(rows_a[k + j + 1]))
            for i, k in zip(bad_i, bad_k)
        )

    totals = {
        "positivity": n_rows,
        "lower_bound": n_rows,
        "vertical": n * (n - 1) // 2 + n_cross,
        "butterfly": n_butterfly,
    }
    return ViolationReport(
        positivity=positivity,
        lower_bound=lower_bound,
        vertical=sorted(vertical),
        butterfly=sorted(butterfly),
        totals_checked=totals,
    )
