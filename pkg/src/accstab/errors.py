"""Exception types shared across the toolkit."""


class AccStabError(Exception):
    """Base class for all toolkit errors."""


class InfeasibleEquilibrium(AccStabError):
    """Ring equilibrium would require a negative speed (L/N below the jam gap)."""


class BadHistory(AccStabError):
    """Supplied history does not cover the delay window at adequate resolution."""


class NonFiniteState(AccStabError):
    """Integration produced NaN or infinite state (numerical blow-up)."""


class LengthMismatch(AccStabError):
    """Series passed to an error metric have different lengths."""


class MissingColumn(AccStabError):
    """Trajectory file lacks a required column."""


class NonMonotoneTime(AccStabError):
    """Trajectory time stamps are not strictly increasing."""


class EmptyOverlap(AccStabError):
    """Trajectory channels have no common time window."""


class NoFeasibleCandidate(AccStabError):
    """Every calibration start returned an infinite objective."""


class DiscretizationUnconverged(AccStabError):
    """Rightmost-root estimate keeps moving as the collocation order grows."""
