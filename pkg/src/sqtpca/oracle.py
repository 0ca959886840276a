"""VSTAT oracles: honest and adversarial responders with a query ledger.

A VSTAT(D, n) oracle answers [0,1]-valued queries with any value inside
the envelope max(1/n, sqrt(p(1-p)/n)) around the true mean p.  The oracle
must know the truth to enforce its own envelope, so queries carry a
structural profile (an affine statistic of the tensor, optionally pushed
through an indicator, a probit, or a user transform) from which the mean
under any model distribution has a closed form or a quadrature.

Also here: the scalar mean estimator driving all SQ procedures, the
larger-noise oracle simulation, and the hypercube graph adversary that
certifies indistinguishable distribution pairs from a query transcript.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import json
import math

import numpy as np

from .errors import (
    BadBound,
    BudgetExceeded,
    EnvelopeViolation,
    IncompatibleSpecs,
    NotUnitQuery,
    TooLarge,
    UncomputableQuery,
)
from .model import DistributionSpec, _rng
from .tensors import LabelingFunction, rank_one


def norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


# ----------------------------------------------------------------------
# Queries
# ----------------------------------------------------------------------

class AffineStat:
    """w . T + b for a fixed dense weight tensor w."""

    __slots__ = ("weights", "offset", "norm", "_flat", "_mean_memo")

    def __init__(self, weights: np.ndarray, offset: float = 0.0):
        weights = np.ascontiguousarray(weights, dtype=float)
        weights.setflags(write=False)
        self.weights = weights
        self.offset = float(offset)
        self._flat = weights.reshape(-1)
        self.norm = float(np.linalg.norm(self._flat))
        self._mean_memo: dict[int, float] = {}

    def value(self, t: np.ndarray) -> float:
        return float(self._flat @ t.reshape(-1)) + self.offset

    def mean_under(self, spec: DistributionSpec) -> float:
        # one bisection reuses the statistic dozens of times per distribution spec
        key = id(spec)
        hit = self._mean_memo.get(key)
        if hit is None:
            hit = float(self._flat @ spec.mean_tensor().reshape(-1)) + self.offset
            if len(self._mean_memo) > 8:
                self._mean_memo.clear()
            self._mean_memo[key] = hit
        return hit

    def std_under(self, spec: DistributionSpec) -> float:
        return math.sqrt(spec.sigma2) * self.norm


@dataclasses.dataclass(frozen=True)
class Query:
    stat: AffineStat
    tag: str = ""

    @property
    def is_unit(self) -> bool:
        raise NotImplementedError


@dataclasses.dataclass(frozen=True)
class IndicatorQuery(Query):
    """1{stat > threshold}; always in {0, 1}."""

    threshold: float = 0.0

    @property
    def is_unit(self) -> bool:
        return True

    def evaluate(self, t: np.ndarray) -> float:
        return 1.0 if self.stat.value(t) > self.threshold else 0.0

    def true_mean(self, spec: DistributionSpec) -> float:
        m = self.stat.mean_under(spec)
        s = self.stat.std_under(spec)
        if s == 0.0:
            return 1.0 if m > self.threshold else 0.0
        return norm_cdf((m - self.threshold) / s)


@dataclasses.dataclass(frozen=True)
class SmoothedIndicatorQuery(Query):
    """Phi((stat - threshold)/smooth); the conditional average of an indicator."""

    threshold: float = 0.0
    smooth: float = 1.0

    @property
    def is_unit(self) -> bool:
        return True

    def evaluate(self, t: np.ndarray) -> float:
        return norm_cdf((self.stat.value(t) - self.threshold) / self.smooth)

    def true_mean(self, spec: DistributionSpec) -> float:
        m = self.stat.mean_under(spec)
        s = self.stat.std_under(spec)
        return norm_cdf((m - self.threshold) / math.hypot(self.smooth, s))


@dataclasses.dataclass(frozen=True)
class UserUnitQuery(Query):
    """fn(stat); fn must map reals into [0,1].  Mean by Gauss-Hermite."""

    fn: object = None

    @property
    def is_unit(self) -> bool:
        return True

    def evaluate(self, t: np.ndarray) -> float:
        return float(self.fn(self.stat.value(t)))

    def true_mean(self, spec: DistributionSpec) -> float:
        m = self.stat.mean_under(spec)
        s = self.stat.std_under(spec)
        if s == 0.0:
            return float(self.fn(m))
        return _adaptive_gauss_hermite(self.fn, m, s)


@dataclasses.dataclass(frozen=True)
class BoundedQuery(Query):
    """Real-valued affine query with a declared second-moment bound B."""

    bound: float = 1.0

    @property
    def is_unit(self) -> bool:
        return False

    def evaluate(self, t: np.ndarray) -> float:
        return self.stat.value(t)

    def true_mean(self, spec: DistributionSpec) -> float:
        return self.stat.mean_under(spec)

    def true_var(self, spec: DistributionSpec) -> float:
        return self.stat.std_under(spec) ** 2


def _adaptive_gauss_hermite(fn, m: float, s: float, tol: float = 1e-10) -> float:
    """E fn(m + s Z), doubling the node count until stable to tol."""
    prev = None
    npts = 64
    while npts <= 1024:
        x, w = np.polynomial.hermite_e.hermegauss(npts)
        vals = np.array([fn(m + s * xi) for xi in x])
        if vals.min() < -1e-9 or vals.max() > 1.0 + 1e-9:
            raise NotUnitQuery("user query left [0,1] on probed inputs")
        est = float((w * vals).sum() / math.sqrt(2.0 * math.pi))
        if prev is not None and abs(est - prev) < tol:
            return est
        prev = est
        npts *= 2
    raise UncomputableQuery("Gauss-Hermite quadrature did not stabilize")


def true_query_mean(spec: DistributionSpec, query: Query) -> float:
    return query.true_mean(spec)


# ----------------------------------------------------------------------
# Oracle
# ----------------------------------------------------------------------

class Strategy(enum.Enum):
    EXACT = "exact"
    EMPIRICAL_CLAMPED = "empirical"
    MAX_SHIFT = "maxshift"
    NULL_MIMIC = "nullmimic"
    SIGNAL_CANCEL = "signalcancel"
    GRAPH_ADVERSARY = "graphadversary"


@dataclasses.dataclass(frozen=True)
class TranscriptEntry:
    query: Query
    response: float
    envelope: float
    true_mean: float


def vstat_envelope(p: float, n: float) -> float:
    pc = min(max(p, 0.0), 1.0)
    return max(1.0 / n, math.sqrt(pc * (1.0 - pc) / n))


class VstatOracle:
    """Stateful VSTAT(D, n) responder with a strategy and a query ledger.

    Every emitted response is asserted to lie inside the envelope around
    the analytically computed true mean; a violation is an internal bug
    and raises immediately.
    """

    def __init__(
        self,
        spec: DistributionSpec,
        n: float,
        strategy: Strategy = Strategy.EXACT,
        seed: int = 0,
        query_cap: int | None = None,
        shift_sign: int = 1,
        keep_transcript: bool = True,
    ):
        if n <= 0:
            raise ValueError("effective sample size must be positive")
        self.spec = spec
        self.n = float(n)
        self.strategy = strategy
        self.seed = int(seed)
        self.query_cap = query_cap
        self.shift_sign = 1 if shift_sign >= 0 else -1
        self.keep_transcript = keep_transcript
        self.queries_used = 0
        self.transcript: list[TranscriptEntry] = []
        self._null = spec.as_null()
        self._emp_rng = _rng(self.seed, 0xE0)

    def respond(self, query: Query) -> float:
        if not query.is_unit:
            raise NotUnitQuery(f"respond() takes [0,1]-valued queries, got {type(query).__name__}")
        if self.query_cap is not None and self.queries_used >= self.query_cap:
            raise BudgetExceeded(f"query cap {self.query_cap} reached")
        mu = query.true_mean(self.spec)
        if mu < -1e-9 or mu > 1.0 + 1e-9:
            raise NotUnitQuery(f"unit query has mean {mu} outside [0,1]")
        env = vstat_envelope(mu, self.n)
        r = self._strategy_response(query, mu, env)
        if abs(r - mu) > env * (1.0 + 1e-9) + 1e-12:
            raise EnvelopeViolation(
                f"strategy {self.strategy} emitted {r} outside [{mu - env}, {mu + env}]"
            )
        self.queries_used += 1
        if self.keep_transcript:
            self.transcript.append(
                TranscriptEntry(query=query, response=r, envelope=env, true_mean=mu)
            )
        return r

    def _strategy_response(self, query: Query, mu: float, env: float) -> float:
        strat = self.strategy
        if strat is Strategy.EXACT:
            return mu
        if strat is Strategy.MAX_SHIFT:
            return mu + self.shift_sign * env
        if strat in (Strategy.NULL_MIMIC, Strategy.SIGNAL_CANCEL, Strategy.GRAPH_ADVERSARY):
            # cancel as much of the spike's contribution as the envelope
            # allows: the projection of the null-distribution mean into
            # the envelope around the true mean
            mu0 = query.true_mean(self._null)
            return min(max(mu0, mu - env), mu + env)
        if strat is Strategy.EMPIRICAL_CLAMPED:
            emp = self._empirical_mean(query, mu)
            return min(max(emp, mu - env), mu + env)
        raise ValueError(f"unknown strategy {strat}")

    def _empirical_mean(self, query: Query, mu: float) -> float:
        n = int(round(self.n))
        if n < 1:
            return mu
        if isinstance(query, IndicatorQuery):
            return float(self._emp_rng.binomial(n, min(max(mu, 0.0), 1.0))) / n
        m = query.stat.mean_under(self.spec)
        s = query.stat.std_under(self.spec)
        draws = m + s * self._emp_rng.standard_normal(min(n, 10 ** 7))
        if isinstance(query, SmoothedIndicatorQuery):
            z = (draws - query.threshold) / query.smooth
            vals = 0.5 * (1.0 + np.vectorize(math.erf)(z / math.sqrt(2.0)))
        else:
            vals = np.array([query.fn(x) for x in draws])
        return float(vals.mean())


# ----------------------------------------------------------------------
# Scalar mean estimation
# ----------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class MeanEstimate:
    value: float
    queries_used: int


def estimate_mean(
    oracle,
    query: Query,
    xi: float | None = None,
    check_bound: bool = True,
) -> MeanEstimate:
    """Estimate E_D q through unit threshold queries on q's statistic.

    Binary search localizes the median of the underlying affine statistic
    using indicator queries 1{stat > t}; every envelope-legal response
    constrains the true tail probability, so the final midpoint is within
    xi/2 plus an envelope-controlled term of the mean (the statistic is
    symmetric about its mean under every model distribution).  Indicator
    queries are answered with a single oracle call.  The error satisfies
    |estimate - E q| <= 8 log(n) sqrt(Var_D q / n) + xi against every
    strategy, using at most ~1.5 log(4 n B / xi^2) queries.
    """
    n = oracle.n
    if xi is None:
        xi = 1.0 / (4.0 * n)
    if xi <= 0:
        raise ValueError("xi must be positive")

    if isinstance(query, IndicatorQuery):
        # genuine 0/1 query: the envelope itself meets the guarantee
        r = oracle.respond(query)
        return MeanEstimate(value=r, queries_used=1)

    if isinstance(query, BoundedQuery):
        half_range = math.sqrt(query.bound)
        deriv = 1.0

        def finish(median):
            return median

    elif isinstance(query, SmoothedIndicatorQuery):
        # model means have norm <= 1, so the statistic's mean is bracketed
        half_range = query.stat.norm + abs(query.stat.offset) + 1.0
        s_out = math.hypot(query.smooth, query.stat.std_under(oracle.spec))
        deriv = 0.3989422804014327 / s_out  # sup |dPhi/dm|

        def finish(median):
            return norm_cdf((median - query.threshold) / s_out)

    else:
        raise UncomputableQuery(
            f"estimate_mean needs an affine or probit profile, got {type(query).__name__}"
        )

    stat = query.stat
    used = 0
    if check_bound and isinstance(query, BoundedQuery):
        # Chebyshev sanity: P(stat > 2 sqrt(B)) <= 1/4 and symmetrically
        slack = vstat_envelope(0.5, n) + 0.05
        hi_probe = oracle.respond(
            IndicatorQuery(stat=stat, threshold=2.0 * half_range, tag=query.tag + "/bcheck+")
        )
        lo_probe = oracle.respond(
            IndicatorQuery(stat=stat, threshold=-2.0 * half_range, tag=query.tag + "/bcheck-")
        )
        used += 2
        if hi_probe > 0.25 + slack or lo_probe < 0.75 - slack:
            raise BadBound(
                f"tail probes ({hi_probe}, {lo_probe}) contradict E q^2 <= {query.bound}"
            )

    lo = -half_range
    hi = half_range
    width_stop = 0.5 * xi / deriv
    max_steps = 200
    steps = 0
    while hi - lo > width_stop and steps < max_steps:
        mid = 0.5 * (lo + hi)
        r = oracle.respond(IndicatorQuery(stat=stat, threshold=mid, tag=query.tag + "/bisect"))
        used += 1
        steps += 1
        if r >= 0.5:
            lo = mid
        else:
            hi = mid
    return MeanEstimate(value=finish(0.5 * (lo + hi)), queries_used=used)


def mean_estimation_query_budget(n: float, bound: float, xi: float) -> float:
    """Stated query budget 3 log(4 n B / xi^2) for one mean estimation."""
    return 3.0 * math.log(4.0 * n * bound / xi ** 2)


# ----------------------------------------------------------------------
# Oracle simulation across noise levels
# ----------------------------------------------------------------------

def downscaled_sample_size(n1: float, S: int) -> float:
    return S * n1 / (256.0 * math.log(n1) ** 2)


class SimulatedVstatOracle:
    """VSTAT(D2, n2) responder built on a VSTAT(D1, n1) oracle.

    D2 shares the mean tensor with D1 and has sigma2 = S * sigma1^2; each
    query is lifted to its conditional average over S-subsample blocks and
    fed to the scalar mean estimator on the inner oracle.
    """

    def __init__(self, inner: VstatOracle, S: int):
        if S < 1 or int(S) != S:
            raise IncompatibleSpecs("S must be a positive integer")
        self.inner = inner
        self.S = int(S)
        spec1 = inner.spec
        self.spec = dataclasses.replace(spec1, sigma2=spec1.sigma2 * self.S)
        if inner.n <= 1.0:
            raise IncompatibleSpecs("inner oracle needs n1 > 1")
        self.n = downscaled_sample_size(inner.n, self.S)
        self.queries_used = 0
        self.transcript: list[TranscriptEntry] = []
        self.inner_counts: list[int] = []

    def _lift(self, query: Query) -> Query:
        """Conditional average of the query given the block mean tensor."""
        cond_sd = math.sqrt(self.spec.sigma2 * (1.0 - 1.0 / self.S)) * query.stat.norm
        if isinstance(query, IndicatorQuery):
            if cond_sd == 0.0:
                return query
            return SmoothedIndicatorQuery(
                stat=query.stat, threshold=query.threshold, smooth=cond_sd,
                tag=query.tag + "/lifted",
            )
        if isinstance(query, SmoothedIndicatorQuery):
            return SmoothedIndicatorQuery(
                stat=query.stat,
                threshold=query.threshold,
                smooth=math.hypot(query.smooth, cond_sd),
                tag=query.tag + "/lifted",
            )
        raise UncomputableQuery("simulation supports indicator and probit queries")

    def respond(self, query: Query) -> float:
        if not query.is_unit:
            raise NotUnitQuery("respond() takes [0,1]-valued queries")
        lifted = self._lift(query)
        xi = 1.0 / (2.0 * self.n)
        before = self.inner.queries_used
        if isinstance(lifted, IndicatorQuery):
            est = self.inner.respond(lifted)
        else:
            est = estimate_mean(self.inner, lifted, xi=xi).value
        inner_used = self.inner.queries_used - before
        mu = query.true_mean(self.spec)
        env = vstat_envelope(mu, self.n)
        if abs(est - mu) > env * (1.0 + 1e-9) + 1e-12:
            raise EnvelopeViolation(
                f"simulated response {est} outside D2 envelope around {mu} (env {env})"
            )
        self.queries_used += 1
        self.inner_counts.append(inner_used)
        self.transcript.append(
            TranscriptEntry(query=query, response=est, envelope=env, true_mean=mu)
        )
        return est


def simulate_downscale(inner: VstatOracle, S: int) -> SimulatedVstatOracle:
    return SimulatedVstatOracle(inner, S)


# ----------------------------------------------------------------------
# Transcript tools
# ----------------------------------------------------------------------

def transcript_violation(transcript, spec: DistributionSpec, n: float) -> float:
    """Largest envelope excess of the recorded responses under `spec`.

    <= 0 means every response is a legal VSTAT(spec, n) answer.
    """
    worst = -math.inf
    for entry in transcript:
        p = entry.query.true_mean(spec)
        env = vstat_envelope(p, n)
        worst = max(worst, abs(entry.response - p) - env)
    return worst


def export_transcript(transcript, path: str, max_cells: int = 4096) -> None:
    """JSON-lines dump: {query_tag, response, envelope, true_mean} + profile."""
    with open(path, "w") as fh:
        for entry in transcript:
            q = entry.query
            rec = {
                "query_tag": q.tag,
                "response": entry.response,
                "envelope": entry.envelope,
                "true_mean": entry.true_mean,
                "type": type(q).__name__,
                "offset": q.stat.offset,
                "shape": list(q.stat.weights.shape),
            }
            if isinstance(q, IndicatorQuery):
                rec["threshold"] = q.threshold
            elif isinstance(q, SmoothedIndicatorQuery):
                rec["threshold"] = q.threshold
                rec["smooth"] = q.smooth
            if q.stat.weights.size <= max_cells:
                rec["weights"] = q.stat.weights.reshape(-1).tolist()
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def import_transcript(path: str) -> list[TranscriptEntry]:
    out = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            if "weights" not in rec:
                raise ValueError("transcript entry lacks weights; cannot rebuild query")
            w = np.array(rec["weights"], dtype=float).reshape(rec["shape"])
            stat = AffineStat(w, rec["offset"])
            if rec["type"] == "IndicatorQuery":
                q: Query = IndicatorQuery(stat=stat, threshold=rec["threshold"], tag=rec["query_tag"])
            elif rec["type"] == "SmoothedIndicatorQuery":
                q = SmoothedIndicatorQuery(
                    stat=stat, threshold=rec["threshold"], smooth=rec["smooth"], tag=rec["query_tag"]
                )
            else:
                raise ValueError(f"cannot import query type {rec['type']}")
            out.append(
                TranscriptEntry(
                    query=q,
                    response=rec["response"],
                    envelope=rec["envelope"],
                    true_mean=rec["true_mean"],
                )
            )
    return out


# ----------------------------------------------------------------------
# Hypercube graph adversary
# ----------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class AdversaryCertificate:
    spec_a: DistributionSpec
    spec_b: DistributionSpec
    mean_distance: float
    worst_violation_a: float
    worst_violation_b: float
    survivors: int


def graph_adversary_certificate(
    transcript,
    lf: LabelingFunction,
    d: int,
    n: float,
    sigma2: float = 1.0,
) -> AdversaryCertificate | None:
    """Search for an unresolved, well-separated pair of spiked distributions.

    Enumerates all hypercube factor tuples, prunes every vertex whose true
    means are resolved by some transcript response (outside its envelope),
    and looks for a surviving pair with |<u_i, v_i>| <= 2^(-1/k) d for all
    labels, which forces mean-tensor distance >= 1.  Responses are then
    re-verified to be envelope-legal for both members.
    """
    from .model import spiked_spec

    K = lf.K
    if d * K > 16:
        raise TooLarge(f"graph adversary enumerates 2^(d K); d*K = {d * K} > 16")
    vertices = list(itertools.product([-1.0, 1.0], repeat=d * K))
    n_vert = len(vertices)
    factor_list = [np.array(v).reshape(K, d) for v in vertices]
    means = np.stack(
        [rank_one(f, lf).reshape(-1) / d ** (lf.k / 2.0) for f in factor_list]
    )

    alive = np.ones(n_vert, dtype=bool)
    stat_cache: dict[int, np.ndarray] = {}
    for entry in transcript:
        q = entry.query
        key = id(q.stat)
        if key not in stat_cache:
            stat_cache[key] = means @ q.stat.weights.reshape(-1) + q.stat.offset
        m_v = stat_cache[key]
        s = math.sqrt(sigma2) * q.stat.norm
        if isinstance(q, IndicatorQuery):
            if s == 0.0:
                p_v = (m_v > q.threshold).astype(float)
            else:
                p_v = _phi((m_v - q.threshold) / s)
        elif isinstance(q, SmoothedIndicatorQuery):
            p_v = _phi((m_v - q.threshold) / math.hypot(q.smooth, s))
        else:
            raise UncomputableQuery(f"certificate cannot price {type(q).__name__}")
        pc = np.clip(p_v, 0.0, 1.0)
        env = np.maximum(1.0 / n, np.sqrt(pc * (1.0 - pc) / n))
        alive &= np.abs(entry.response - p_v) <= env * (1.0 + 1e-9) + 1e-12
        if not alive.any():
            return None

    survivors = np.flatnonzero(alive)
    cut = 2.0 ** (-1.0 / lf.k) * d
    for ia, ib in itertools.combinations(survivors, 2):
        fa, fb = factor_list[ia], factor_list[ib]
        if all(abs(float(fa[i] @ fb[i])) <= cut + 1e-9 for i in range(K)):
            dist = float(np.linalg.norm(means[ia] - means[ib]))
            spec_a = spiked_spec(lf, fa, sigma2)
            spec_b = spiked_spec(lf, fb, sigma2)
            return AdversaryCertificate(
                spec_a=spec_a,
                spec_b=spec_b,
                mean_distance=dist,
                worst_violation_a=transcript_violation(transcript, spec_a, n),
                worst_violation_b=transcript_violation(transcript, spec_b, n),
                survivors=int(len(survivors)),
            )
    return None


def _phi(x: np.ndarray) -> np.ndarray:
    from scipy.special import ndtr

    return ndtr(x)
