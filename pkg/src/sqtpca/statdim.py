"""Statistical-dimension and query-complexity lower bounds, numerically.

The tail probability that one normalized query resolves a random
hypercube spike is bounded by (e/eps^2 * max_l (u-1)^(sum l) coeff(l))^(u/2),
with the coefficients computed exactly by the series route instead of the
unknown asymptotic constants.  The statistical dimension then lower-bounds
SQ query complexity through the framework reduction.
"""

from __future__ import annotations

import dataclasses
import itertools
import math

from .coeffs import p_bar_zero_series, p_pi_series, SERIES_ORDER
from .errors import HypothesisViolated
from .tensors import LabelingFunction

U_RANGE = range(2, 33)


class CoeffTable:
    """Cached series coefficients for one labelling at one size.

    reference="null" uses the plain coefficients; reference="vbar" swaps
    in the support-filtered closed form at the all-zero pattern (for the
    other patterns the plain coefficient is a valid upper bound of the
    filtered one).
    """

    def __init__(self, lf: LabelingFunction, d: int, reference: str = "null",
                 order: int = SERIES_ORDER):
        if reference not in ("null", "vbar"):
            raise ValueError("reference must be 'null' or 'vbar'")
        self.lf = lf
        self.d = d
        self.reference = reference
        self.order = order
        self._cache: dict[tuple, float] = {}

    def coeff(self, pattern: tuple) -> float:
        pattern = tuple(int(x) for x in pattern)
        if pattern not in self._cache:
            if self.reference == "vbar" and all(x == 0 for x in pattern):
                value = p_bar_zero_series(self.lf, self.d, order=self.order).value
            else:
                value = p_pi_series(self.lf, self.d, pattern, order=self.order).value
            self._cache[pattern] = max(value, 0.0)
        return self._cache[pattern]


def _pattern_box(lf: LabelingFunction, d: int) -> list[tuple]:
    cap = min(2 * lf.k, d)
    return list(itertools.product(range(cap + 1), repeat=lf.K))


@dataclasses.dataclass(frozen=True)
class TailBound:
    value: float  # clamped to [0, 1]
    certified: bool
    argmax_pattern: tuple
    boxed_max: float


def resolution_tail_bound(
    lf: LabelingFunction,
    d: int,
    epsilon: float,
    u: int,
    table: CoeffTable,
) -> TailBound:
    """(e/eps^2 * max over the pattern box of (u-1)^(sum l) coeff)^(u/2).

    Certified when d >= (u-1)^(2k), which makes the envelope
    ((u-1)^k/sqrt(d))^(max l) decreasing beyond the box; the boundary
    shell is additionally checked to not carry the max.
    """
    if u < 2:
        raise ValueError("u must be >= 2")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    best = 0.0
    best_pattern = (0,) * lf.K
    boundary_best = 0.0
    cap = min(2 * lf.k, d)
    for pattern in _pattern_box(lf, d):
        weighted = (u - 1) ** sum(pattern) * table.coeff(pattern)
        if weighted > best:
            best = weighted
            best_pattern = pattern
        if max(pattern) == cap:
            boundary_best = max(boundary_best, weighted)
    certified = d >= (u - 1) ** (2 * lf.k) and boundary_best < best + 1e-30
    raw = (math.e / epsilon ** 2 * best) ** (u / 2.0)
    return TailBound(
        value=min(max(raw, 0.0), 1.0),
        certified=certified,
        argmax_pattern=best_pattern,
        boxed_max=best,
    )


@dataclasses.dataclass(frozen=True)
class SdnBound:
    bound: float
    u_star: int
    certified: bool
    tail: float
    reference: str


def sdn_lower_bound(
    lf: LabelingFunction,
    d: int,
    n: float,
    reference: str = "null",
    table: CoeffTable | None = None,
    u_range=U_RANGE,
) -> SdnBound:
    """Largest (eps/4) / tail(u, eps/2) over u, with eps = 1/sqrt(3n).

    This lower-bounds the statistical dimension at the tolerance the
    framework reduction requires; an SQ tester must make at least this
    many queries, an estimator at least half as many (apply
    estimation_query_bound).
    """
    if table is None:
        table = CoeffTable(lf, d, reference)
    eps = 1.0 / math.sqrt(3.0 * n)
    best = None
    for u in u_range:
        tb = resolution_tail_bound(lf, d, eps / 2.0, u, table)
        tail = max(tb.value, 1e-300)
        bound = (eps / 4.0) / tail
        if best is None or bound > best.bound:
            best = SdnBound(
                bound=bound, u_star=u, certified=tb.certified, tail=tail, reference=reference
            )
    return best


def estimation_query_bound(sdn: SdnBound) -> float:
    """Estimation query lower bound: 0.5 * SDN."""
    return 0.5 * sdn.bound


@dataclasses.dataclass(frozen=True)
class HardnessBound:
    query_bound: float
    u: int
    certified: bool
    exceeds_dL: bool


def hardness_query_bound(
    lf: LabelingFunction,
    d: int,
    n: float,
    L: int,
    epsilon_exp: float,
    C0: float = 1.0,
    table: CoeffTable | None = None,
) -> HardnessBound:
    """Evaluate the lower-bound chain at the prescribed moment order.

    Requires n <= C0 d^((k+o)/2 - epsilon_exp); uses
    u = ceil((L + (k+o)/4) / epsilon_exp) and the chain
    SDN >= (1/(4 sqrt(3n))) * (36 e n * boxed max)^(-u/2), with exact
    coefficients in place of the asymptotic constants.
    """
    k, o = lf.k, lf.o
    if n > C0 * d ** ((k + o) / 2.0 - epsilon_exp) * (1.0 + 1e-12):
        raise HypothesisViolated(
            f"n = {n} exceeds C0 d^((k+o)/2 - eps) = {C0 * d ** ((k + o) / 2.0 - epsilon_exp)}"
        )
    if table is None:
        table = CoeffTable(lf, d, "null")
    u = max(2, math.ceil((L + (k + o) / 4.0) / epsilon_exp))
    tb = resolution_tail_bound(lf, d, 1.0 / (6.0 * math.sqrt(n)), u, table)
    tail = max(tb.value, 1e-300)
    bound = 1.0 / (4.0 * math.sqrt(3.0 * n)) / tail
    return HardnessBound(
        query_bound=bound, u=u, certified=tb.certified, exceeds_dL=bound > float(d) ** L
    )


def hardness_threshold_scan(
    lf: LabelingFunction,
    d_grid,
    L: int,
    epsilon_exp: float,
    C0: float = 1.0,
    optimize_u: bool = True,
) -> dict:
    """Per-d query bounds at n = C0 d^((k+o)/2 - eps), and the first d
    where the bound exceeds d^L (None when the grid never crosses)."""
    rows = []
    threshold = None
    for d in d_grid:
        n = max(1.0, C0 * float(d) ** ((lf.k + lf.o) / 2.0 - epsilon_exp))
        if optimize_u:
            sdn = sdn_lower_bound(lf, d, n)
            bound, u, certified = sdn.bound, sdn.u_star, sdn.certified
            exceeds = bound > float(d) ** L
        else:
            res = hardness_query_bound(lf, d, n, L, epsilon_exp, C0)
            bound, u, certified, exceeds = res.query_bound, res.u, res.certified, res.exceeds_dL
        rows.append({"d": d, "n": n, "u": u, "bound": bound, "certified": certified,
                     "exceeds_dL": exceeds})
        if exceeds and threshold is None:
            threshold = d
    return {"rows": rows, "first_d_exceeding": threshold}
