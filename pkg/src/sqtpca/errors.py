"""Exception types shared across the package."""


class SqtpcaError(Exception):
    """Base class for all package errors."""


# --- tensor core ---

class TensorTooLarge(SqtpcaError):
    """d**k exceeds the dense-storage cap."""


class DimensionMismatch(SqtpcaError):
    pass


class ModeOutOfRange(SqtpcaError):
    pass


class BadSplit(SqtpcaError):
    """Invalid row/column mode split for flattening."""


class EmptyLabel(SqtpcaError):
    """Some label in 1..K is never used by the assignment."""


class BadOrder(SqtpcaError):
    """Tensor order k < 2."""


# --- oracle ---

class NotUnitQuery(SqtpcaError):
    """A VSTAT oracle only accepts [0,1]-valued queries."""


class BudgetExceeded(SqtpcaError):
    pass


class BadBound(SqtpcaError):
    """Oracle responses contradict the declared second-moment bound."""


class UncomputableQuery(SqtpcaError):
    """The oracle cannot evaluate the true mean of this query."""


class EnvelopeViolation(SqtpcaError):
    """An oracle response left the VSTAT error envelope (internal bug)."""


class IncompatibleSpecs(SqtpcaError):
    pass


class TooLarge(SqtpcaError):
    """Exhaustive enumeration is infeasible at this size."""


# --- SQ algorithms ---

class OddOrder(SqtpcaError):
    """Trace query requires even tensor order."""


class NoOddPart(SqtpcaError):
    """Odd-part estimation requires oddness o >= 1."""


# --- baselines ---

class NoConvergence(SqtpcaError):
    pass


class ZeroIterate(SqtpcaError):
    """Power-iteration contraction vanished."""


# --- combinatorics ---

class PatternTooWide(SqtpcaError):
    """Some parity-pattern length l_i exceeds d."""


# --- stat dimension ---

class HypothesisViolated(SqtpcaError):
    """Sample size exceeds the lower-bound hypothesis n <= C0 d^((k+o)/2-eps)."""


# --- harness ---

class ConfigError(SqtpcaError):
    pass


class DegreeCap(SqtpcaError):
    """Hermite degree exceeds the supported cap."""
