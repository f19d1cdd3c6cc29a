"""Exception and warning types shared across the package."""

from __future__ import annotations


class RndxError(Exception):
    """Base class for all package errors."""


class ZeroSpot(RndxError):
    """Spot price is zero or negative; normalization is undefined."""


class DegenerateDesign(RndxError):
    """Regression design matrix is singular (e.g. all strikes equal)."""


class EmptyIntersection(RndxError):
    """No strike is quoted on both the call and the put leg."""


class InvalidSizes(RndxError):
    """A quoted depth is negative or non-finite."""


class SolverFailure(RndxError):
    """Underlying LP/conic solver did not return an optimal status."""


class Infeasible(RndxError):
    """Constraint set is empty; usually a sign of residual arbitrage."""


class LatticeDetectionFailure(RndxError):
    """Quoted strikes do not share a common lattice mesh."""


class StrikeAboveSupport(RndxError):
    """Requested strike lies above the upper end of the density grid."""


class TailExceedsSupport(RndxError):
    """Extrapolated terminal strike falls outside the density grid."""


class BarycenterViolated(RndxError):
    """Left-tail relocation point is not below the conditional barycenter."""


class TruncationTooNarrow(RndxError):
    """Fourier-cosine truncation range leaves out too much probability mass."""


class CannotViolate(RndxError):
    """Contamination parameters are too weak to create any violation."""


class OutOfBand(RndxError):
    """Option price lies outside the no-arbitrage band; no implied vol exists."""


class FitDiverged(RndxError):
    """All calibration starts failed to converge."""


class NegativeSyntheticBid(UserWarning):
    """A put-parity transformed call lower bound came out negative."""


class DegenerateVariance(UserWarning):
    """Total volatility is not small; the weight guideline is unreliable."""
