"""Exact and Monte Carlo computation of the Poisson parity coefficients.

The central objects are the probabilities, over a random count tensor C
with i.i.d. Poisson(d^-k) entries, that every labelled partial-sum parity
vector equals a prescribed prefix pattern (1,...,1,0,...,0).  Three routes
are implemented:

* a moment series from the Rademacher representation of the parity
  indicator (exact rational terms, certified truncation bound),
* direct enumeration of count tensors by an integer dynamic program over
  cells (exact rational, Poisson-tail truncation bound),
* stratified Monte Carlo.

All three agree within their attached bounds; the series and enumeration
routes share no code beyond the labelling type.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln
from scipy.stats import chi2

from .errors import PatternTooWide, TooLarge
from .tensors import LabelingFunction, prior_mean_tensor

SERIES_ORDER = 12  # tail e/13! < 5e-10
ENUM_MAX_MASS = 8  # Poisson(1) tail beyond 8 is < 1.2e-6

# enumeration cost is 2^(d*k) parity states; beyond 12 bits it is hopeless
_ENUM_STATE_BITS = 12

_EXACT_D_LIMIT = 600  # switch the moment evaluation to log-space floats above


@dataclasses.dataclass(frozen=True)
class CoeffResult:
    value: float
    bound: float  # certified truncation / statistical error bound
    method: str

    def agrees_with(self, other: "CoeffResult", slack: float = 1e-10) -> bool:
        return abs(self.value - other.value) <= self.bound + other.bound + slack


def _check_pattern(lf: LabelingFunction, d: int, pattern) -> tuple[int, ...]:
    pattern = tuple(int(x) for x in pattern)
    if len(pattern) != lf.K:
        raise ValueError(f"pattern must have K={lf.K} entries")
    if any(x < 0 for x in pattern):
        raise ValueError("pattern entries must be nonnegative")
    if any(x > d for x in pattern):
        raise PatternTooWide(f"pattern {pattern} exceeds d={d}")
    return pattern


# ----------------------------------------------------------------------
# Rademacher moments
# ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def _sum_prefix_moment(l: int, t: int) -> Fraction:
    """E[(X_1+...+X_l)^t * X_1...X_l] for i.i.d. Rademacher X, by 2^l sum."""
    total = 0
    for a in range(l + 1):
        sign = 1 if (l - a) % 2 == 0 else -1
        total += math.comb(l, a) * sign * (2 * a - l) ** t
    return Fraction(total, 2 ** l)


@lru_cache(maxsize=None)
def _mean_moment(n: int, m: int) -> Fraction:
    """E[Ybar^m] for the mean of n i.i.d. Rademacher entries."""
    if m == 0:
        return Fraction(1)
    if m % 2 == 1:
        return Fraction(0)
    total = sum(math.comb(n, j) * (n - 2 * j) ** m for j in range(n + 1))
    return Fraction(total, 2 ** n * n ** m)


def _mean_moment_float(n: int, m: int) -> float:
    if m == 0:
        return 1.0
    if m % 2 == 1:
        return 0.0
    j = np.arange(n + 1)
    centered = n - 2 * j
    mask = centered != 0
    logs = (
        gammaln(n + 1)
        - gammaln(j[mask] + 1)
        - gammaln(n - j[mask] + 1)
        + m * np.log(np.abs(centered[mask]))
        - n * math.log(2.0)
        - m * math.log(n)
    )
    top = logs.max()
    return float(np.exp(top) * np.exp(logs - top).sum())


def rademacher_moment(d: int, s: int, l: int, exact: bool | None = None):
    """E[Xbar^s * X_1...X_l] for X uniform on the hypercube {+-1}^d.

    Exactly zero when l > s or l+s is odd; otherwise a nonnegative
    rational (returned as Fraction when exact, float otherwise).  Uses the
    split Xbar = Z/d + ((d-l)/d) Ybar over the first l and remaining d-l
    coordinates.
    """
    if d < 1 or s < 0 or l < 0 or l > d:
        raise ValueError(f"invalid (d, s, l) = ({d}, {s}, {l})")
    if exact is None:
        exact = d <= _EXACT_D_LIMIT
    if l > s or (l + s) % 2 == 1:
        return Fraction(0) if exact else 0.0
    if exact:
        total = Fraction(0)
        for t in range(l, s + 1):
            if d == l and t < s:
                continue  # ((d-l)/d)^(s-t) vanishes
            ez = _sum_prefix_moment(l, t)
            if ez == 0:
                continue
            ey = _mean_moment(d - l, s - t)
            if ey == 0:
                continue
            total += (
                math.comb(s, t)
                * Fraction(d - l, d) ** (s - t)
                * Fraction(1, d ** t)
                * ez
                * ey
            )
        return total
    total = 0.0
    for t in range(l, s + 1):
        if d == l and t < s:
            continue
        ez = float(_sum_prefix_moment(l, t))
        if ez == 0.0:
            continue
        ey = _mean_moment_float(d - l, s - t)
        if ey == 0.0:
            continue
        total += (
            math.comb(s, t)
            * ((d - l) / d) ** (s - t)
            * d ** (-float(t))
            * ez
            * ey
        )
    return total


# ----------------------------------------------------------------------
# Series route
# ----------------------------------------------------------------------

def series_truncation_bound(order: int) -> float:
    return math.e / math.factorial(order + 1)


def p_pi_series(lf: LabelingFunction, d: int, pattern, order: int = SERIES_ORDER) -> CoeffResult:
    """Moment series for the parity probability, to the given order.

    Sums (1/e) * sum_{a=1..A} (1/a!) prod_i E[Xbar^(a s_i) X_1..X_{l_i}];
    every neglected term is at most 1/a! in magnitude, so the truncation
    bound is e/(A+1)!.
    """
    pattern = _check_pattern(lf, d, pattern)
    if order < 2:
        raise ValueError("order must be >= 2")
    exact = d <= _EXACT_D_LIMIT
    if exact:
        total = Fraction(0)
        for a in range(1, order + 1):
            term = Fraction(1, math.factorial(a))
            for si, li in zip(lf.s, pattern):
                term *= rademacher_moment(d, a * si, li, exact=True)
                if term == 0:
                    break
            total += term
        value = float(total) * math.exp(-1.0)
    else:
        value = 0.0
        for a in range(1, order + 1):
            term = 1.0 / math.factorial(a)
            for si, li in zip(lf.s, pattern):
                term *= rademacher_moment(d, a * si, li, exact=False)
                if term == 0.0:
                    break
            value += term
        value *= math.exp(-1.0)
    return CoeffResult(value=value, bound=series_truncation_bound(order), method="series")


# ----------------------------------------------------------------------
# Enumeration route (integer DP over cells)
# ----------------------------------------------------------------------

def enumeration_truncation_bound(max_mass: int) -> float:
    """P(Poisson(1) > max_mass)."""
    return 1.0 - math.exp(-1.0) * sum(1.0 / math.factorial(m) for m in range(max_mass + 1))


def _cell_mask(cell: tuple[int, ...], d: int) -> int:
    mask = 0
    for mode, j in enumerate(cell):
        mask |= 1 << (mode * d + j)
    return mask


def _parity_mass_table(d: int, k: int, max_mass: int, forbidden: frozenset) -> dict:
    """Exact sums of multinomial weights by (mode-parity state, total mass).

    table[state][m] = sum over count tensors c with ||c||_1 = m, zero on
    forbidden cells, and per-mode partial-sum parities packed into
    `state`, of the multinomial coefficient m!/c!.  From it, the Poisson
    probability of any parity event at mass m is recovered by dividing by
    d^(k m) m! (and one global factor e).
    """
    table: dict[int, list[int]] = {0: [1] + [0] * max_mass}
    comb_add = [
        [math.comb(ms + j, j) for j in range(max_mass - ms + 1)]
        for ms in range(max_mass + 1)
    ]
    for cell in itertools.product(range(d), repeat=k):
        if cell in forbidden:
            continue
        mask = _cell_mask(cell, d)
        snapshot = [(st, arr.copy()) for st, arr in table.items()]
        for st, arr in snapshot:
            st_odd = st ^ mask
            for ms in range(max_mass):
                val = arr[ms]
                if not val:
                    continue
                row = comb_add[ms]
                for j in range(1, max_mass - ms + 1):
                    target = st_odd if j & 1 else st
                    dest = table.get(target)
                    if dest is None:
                        dest = [0] * (max_mass + 1)
                        table[target] = dest
                    dest[ms + j] += val * row[j]
        del snapshot
    return table


@lru_cache(maxsize=16)
def _parity_table_cached(d: int, k: int, max_mass: int, forbidden: frozenset) -> dict:
    return _parity_mass_table(d, k, max_mass, forbidden)


def _enum_guard(d: int, k: int):
    if d * k > _ENUM_STATE_BITS:
        raise TooLarge(
            f"enumeration needs 2^(d*k) parity states; d*k = {d * k} > {_ENUM_STATE_BITS}"
        )


def _pattern_value_from_table(
    lf: LabelingFunction, d: int, pattern, table: dict, max_mass: int
) -> Fraction:
    targets = tuple((1 << li) - 1 for li in pattern)
    chunk = (1 << d) - 1
    total = Fraction(0)
    for st, arr in table.items():
        label_par = [0] * lf.K
        for mode, lab in enumerate(lf.assignment):
            label_par[lab - 1] ^= (st >> (mode * d)) & chunk
        if tuple(label_par) != targets:
            continue
        for m in range(1, max_mass + 1):
            if arr[m]:
                total += Fraction(arr[m], d ** (lf.k * m) * math.factorial(m))
    return total


def p_pi_enumeration(
    lf: LabelingFunction, d: int, pattern, max_mass: int = ENUM_MAX_MASS
) -> CoeffResult:
    """Exact enumeration over count tensors with total mass <= max_mass."""
    pattern = _check_pattern(lf, d, pattern)
    _enum_guard(d, lf.k)
    table = _parity_table_cached(d, lf.k, max_mass, frozenset())
    total = _pattern_value_from_table(lf, d, pattern, table, max_mass)
    return CoeffResult(
        value=float(total) * math.exp(-1.0),
        bound=enumeration_truncation_bound(max_mass),
        method="enumeration",
    )


def _vbar_support(lf: LabelingFunction, d: int) -> frozenset:
    vbar = prior_mean_tensor(lf, d)
    return frozenset(tuple(int(i) for i in idx) for idx in np.argwhere(vbar > 0.5))


def p_bar_pi(
    lf: LabelingFunction, d: int, pattern, max_mass: int = ENUM_MAX_MASS
) -> CoeffResult:
    """Support-filtered coefficient: counts avoiding the prior mean support.

    Enumeration with the cells of supp(Vbar) forced to zero.  For the
    all-zero pattern the independent closed form
    (1/e) E[exp(W - E W)] - 1/e is also evaluated by series and must
    agree within combined bounds.
    """
    pattern = _check_pattern(lf, d, pattern)
    _enum_guard(d, lf.k)
    forbidden = _vbar_support(lf, d)
    table = _parity_table_cached(d, lf.k, max_mass, forbidden)
    total = _pattern_value_from_table(lf, d, pattern, table, max_mass)
    result = CoeffResult(
        value=float(total) * math.exp(-1.0),
        bound=enumeration_truncation_bound(max_mass),
        method="enumeration",
    )
    if all(x == 0 for x in pattern):
        closed = p_bar_zero_series(lf, d)
        if not result.agrees_with(closed):
            raise AssertionError(
                f"p_bar closed form {closed.value} disagrees with enumeration {result.value}"
            )
    return result


def p_bar_zero_series(lf: LabelingFunction, d: int, order: int = SERIES_ORDER) -> CoeffResult:
    """Closed form of the filtered coefficient at the all-zero pattern.

    (1/e) E[exp(W - E W)] - 1/e with W = prod_i Xbar_i^(s_i); the centring
    uses E W = |supp(Vbar)| / d^k.
    """
    exact = d <= _EXACT_D_LIMIT
    mu = Fraction(1) if exact else 1.0
    for si in lf.s:
        mu = mu * rademacher_moment(d, si, 0, exact=exact)
    if exact:
        ew = Fraction(0)
        for a in range(0, order + 1):
            term = Fraction(1, math.factorial(a))
            for si in lf.s:
                term *= rademacher_moment(d, a * si, 0, exact=True)
                if term == 0:
                    break
            ew += term
        value = (math.exp(-float(mu)) * float(ew) - 1.0) * math.exp(-1.0)
    else:
        ew = 0.0
        for a in range(0, order + 1):
            term = 1.0 / math.factorial(a)
            for si in lf.s:
                term *= rademacher_moment(d, a * si, 0, exact=False)
                if term == 0.0:
                    break
            ew += term
        value = (math.exp(-float(mu)) * ew - 1.0) * math.exp(-1.0)
    return CoeffResult(value=value, bound=series_truncation_bound(order), method="series")


# ----------------------------------------------------------------------
# Monte Carlo route
# ----------------------------------------------------------------------

MC_MAX_MASS = 12
MC_Z = 5.0  # statistical bound multiplier


@lru_cache(maxsize=8)
def _mc_signature_counts(
    assignment: tuple, d: int, trials: int, seed: int, max_mass: int
) -> tuple:
    """Per-mass counts of labelled parity signatures, stratified by mass.

    Conditioned on total mass m, the cells of the Poisson tensor are
    i.i.d. uniform, so each stratum draws (trials_m, m) uniform cells.
    Signatures pack the K parity vectors into one 64-bit key.
    Returns (pmf, trials_per_mass, list of {signature: count}).
    """
    from .tensors import make_labeling

    lf = make_labeling(assignment)
    if d * lf.K > 60:
        raise TooLarge("Monte Carlo parity signatures use 64-bit packing")
    pmf = [math.exp(-1.0) / math.factorial(m) for m in range(max_mass + 1)]
    weight_sum = sum(pmf)
    alloc = [max(1000, int(round(trials * w / weight_sum))) for w in pmf]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    counts: list[dict] = []
    label_modes = [lf.modes_of(i) for i in range(1, lf.K + 1)]
    for m in range(max_mass + 1):
        t_m = alloc[m]
        if m == 0:
            counts.append({0: t_m})
            continue
        cells = rng.integers(0, d ** lf.k, size=(t_m, m), dtype=np.int64)
        mode_idx = []
        for mode in range(lf.k):
            mode_idx.append(((cells // d ** (lf.k - 1 - mode)) % d).astype(np.uint64))
        packed = np.zeros(t_m, dtype=np.uint64)
        for i, modes in enumerate(label_modes):
            sig = np.zeros(t_m, dtype=np.uint64)
            for mode in modes:
                idx = mode_idx[mode - 1]
                for pos in range(m):
                    sig ^= np.uint64(1) << idx[:, pos]
            packed ^= sig << np.uint64(i * d)
        keys, cnt = np.unique(packed, return_counts=True)
        counts.append({int(a): int(b) for a, b in zip(keys, cnt)})
    return tuple(pmf), tuple(alloc), tuple(counts)


def p_pi_montecarlo(
    lf: LabelingFunction,
    d: int,
    pattern,
    trials: int = 10 ** 6,
    seed: int = 0,
    max_mass: int = MC_MAX_MASS,
) -> CoeffResult:
    """Stratified Monte Carlo estimate with a MC_Z-sigma statistical bound."""
    pattern = _check_pattern(lf, d, pattern)
    pmf, alloc, counts = _mc_signature_counts(lf.assignment, d, trials, seed, max_mass)
    target = 0
    for i, li in enumerate(pattern):
        target ^= ((1 << li) - 1) << (i * d)
    value = 0.0
    var = 0.0
    for m in range(1, max_mass + 1):
        t_m = alloc[m]
        hits = counts[m].get(target, 0)
        phat = hits / t_m
        value += pmf[m] * phat
        var += pmf[m] ** 2 * phat * (1.0 - phat) / t_m
    tail = 1.0 - sum(pmf)
    bound = MC_Z * math.sqrt(var) + tail + MC_Z / min(alloc[1:]) if max_mass >= 1 else 1.0
    return CoeffResult(value=value, bound=bound, method="montecarlo")


# ----------------------------------------------------------------------
# Poisson tensor structure checks
# ----------------------------------------------------------------------

def poisson_structure_check(d: int, k: int, trials: int, seed: int) -> dict:
    """Empirical check of the Poisson/Multinomial structure of count tensors.

    Chi-square goodness of fit of the total mass against Poisson(1), and
    total-variation comparison of the joint law of the per-mode partial
    sums against the product of Multinomial(m, d) laws, per observed total
    m <= 4.
    """
    if trials < 10 ** 4:
        raise ValueError("need at least 1e4 trials")
    ncells = d ** k
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    cells = rng.poisson(1.0 / ncells, size=(trials, ncells))
    mass = cells.sum(axis=1)

    # chi-square of mass against Poisson(1), merging sparse tail bins
    max_bin = int(mass.max())
    observed = np.bincount(mass, minlength=max_bin + 1).astype(float)
    pmf = np.array([math.exp(-1.0) / math.factorial(m) for m in range(max_bin + 1)])
    expected = trials * pmf
    expected[-1] += trials * (1.0 - pmf.sum())
    while len(expected) > 2 and expected[-1] < 5.0:
        expected[-2] += expected[-1]
        observed[-2] += observed[-1]
        expected = expected[:-1]
        observed = observed[:-1]
    stat = float(((observed - expected) ** 2 / expected).sum())
    dof = len(expected) - 1
    pvalue = float(chi2.sf(stat, dof))

    shaped = cells.reshape((trials,) + (d,) * k)
    tv_by_mass = {}
    for m in range(1, 5):
        sel = shaped[mass == m]
        n_m = sel.shape[0]
        if n_m == 0:
            continue
        sums = []
        for mode in range(k):
            axes = tuple(1 + a for a in range(k) if a != mode)
            sums.append(sel.sum(axis=axes))
        keys: dict = {}
        for t in range(n_m):
            key = tuple(tuple(int(x) for x in sums[mode][t]) for mode in range(k))
            keys[key] = keys.get(key, 0) + 1
        comps = list(_compositions(m, d))
        comp_pmf = {c: math.factorial(m) / (np.prod([math.factorial(x) for x in c]) * d ** m) for c in comps}
        tv = 0.0
        for joint in itertools.product(comps, repeat=k):
            theory = float(np.prod([comp_pmf[c] for c in joint]))
            emp = keys.get(joint, 0) / n_m
            tv += abs(emp - theory)
        tv_by_mass[m] = {"tv": 0.5 * tv, "tolerance": 4.0 / math.sqrt(n_m), "stratum": n_m}
    return {"chi2_stat": stat, "dof": dof, "pvalue": pvalue, "tv_by_mass": tv_by_mass}


def _compositions(m: int, d: int):
    """All d-part compositions of m, as tuples."""
    if d == 1:
        yield (m,)
        return
    for first in range(m + 1):
        for rest in _compositions(m - first, d - 1):
            yield (first,) + rest


def exact_conditional_check(d: int, k: int, max_mass: int = 3) -> float:
    """Exact small-support comparison of the conditional partial-sum law.

    Enumerates count tensors with total mass m <= max_mass and compares
    the conditional joint law of per-mode partial sums with the product
    of Multinomial(m, d) pmfs.  Returns the largest absolute difference.
    """
    if d ** k > 64:
        raise TooLarge("exact conditional check is for tiny tensors")
    worst = Fraction(0)
    cells = list(itertools.product(range(d), repeat=k))
    for m in range(1, max_mass + 1):
        joint: dict = {}
        for combo in itertools.combinations_with_replacement(range(len(cells)), m):
            c = {}
            for i in combo:
                c[i] = c.get(i, 0) + 1
            weight = Fraction(math.factorial(m))
            for cnt in c.values():
                weight /= math.factorial(cnt)
            weight /= Fraction(d ** k) ** m  # conditional pmf of the cell multiset
            sums = tuple(
                tuple(
                    sum(cnt for i, cnt in c.items() if cells[i][mode] == j)
                    for j in range(d)
                )
                for mode in range(k)
            )
            joint[sums] = joint.get(sums, Fraction(0)) + weight
        comps = list(_compositions(m, d))
        comp_pmf = {
            c: Fraction(math.factorial(m), d ** m)
            / math.prod(math.factorial(x) for x in c)
            for c in comps
        }
        for key_joint in itertools.product(comps, repeat=k):
            theory = math.prod(comp_pmf[c] for c in key_joint)
            emp = joint.get(key_joint, Fraction(0))
            worst = max(worst, abs(emp - theory))
    return float(worst)


# ----------------------------------------------------------------------
# Scaling verification
# ----------------------------------------------------------------------

def predicted_exponent(lf: LabelingFunction, pattern) -> float:
    """Case table for the large-d decay exponent of the coefficient."""
    pattern = tuple(int(x) for x in pattern)
    k = lf.k
    if all(x == 0 for x in pattern):
        return -k / 2.0 if lf.o == 0 else -float(k)
    if all(li <= si and (li + si) % 2 == 0 for li, si in zip(pattern, lf.s)):
        return -(k + sum(pattern)) / 2.0
    if max(pattern) >= 2 * k:
        return -max(pattern) / 2.0
    return -float(k)


def verify_scaling(
    lf: LabelingFunction, pattern, d_grid, order: int = SERIES_ORDER
) -> dict:
    """Least-squares slope of log p vs log d against the predicted exponent."""
    values = []
    for d in d_grid:
        res = p_pi_series(lf, d, pattern, order=order)
        if res.value <= 0:
            raise ValueError(f"coefficient vanished at d={d}; cannot fit a slope")
        values.append(res.value)
    logd = np.log(np.asarray(d_grid, dtype=float))
    logp = np.log(np.asarray(values))
    slope = float(np.polyfit(logd, logp, 1)[0])
    predicted = predicted_exponent(lf, pattern)
    return {
        "slope": slope,
        "predicted": predicted,
        "abs_error": abs(slope - predicted),
        "values": values,
    }
