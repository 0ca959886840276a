"""VSTAT oracle: envelopes, strategies, mean estimation, simulation, adversary."""

import math

import numpy as np
import pytest

from sqtpca.errors import (
    BadBound,
    BudgetExceeded,
    NotUnitQuery,
    TooLarge,
)
from sqtpca.model import hypercube_factors, null_spec, spiked_spec
from sqtpca.oracle import (
    AffineStat,
    BoundedQuery,
    IndicatorQuery,
    SmoothedIndicatorQuery,
    Strategy,
    UserUnitQuery,
    VstatOracle,
    downscaled_sample_size,
    estimate_mean,
    export_transcript,
    mean_estimation_query_budget,
    graph_adversary_certificate,
    import_transcript,
    norm_cdf,
    simulate_downscale,
    transcript_violation,
    vstat_envelope,
)
from sqtpca.sq import even_symmetric_test, sq_estimate
from sqtpca.tensors import make_labeling

LF2 = make_labeling((1, 1))


def _sym_spec(d=4, sigma2=1.0, seed=0):
    return spiked_spec(LF2, hypercube_factors(LF2, d, seed=seed), sigma2)


def _entry_stat(d, i=0, j=0):
    w = np.zeros((d, d))
    w[i, j] = 1.0
    return AffineStat(w)


def test_envelope_formula():
    assert math.isclose(vstat_envelope(0.5, 100), 0.05)
    assert math.isclose(vstat_envelope(1.0, 7), 1.0 / 7)
    assert math.isclose(vstat_envelope(0.01, 10 ** 4), math.sqrt(0.0099 / 10 ** 4))


def test_responses_inside_envelope_all_strategies():
    spec = _sym_spec()
    # median threshold gives true mean exactly 1/2
    stat = _entry_stat(4)
    mu_stat = stat.mean_under(spec)
    q_half = IndicatorQuery(stat=stat, threshold=mu_stat, tag="half")
    q_one = IndicatorQuery(stat=AffineStat(np.zeros((4, 4)), offset=1.0), threshold=0.5, tag="one")
    for strat in Strategy:
        orc = VstatOracle(spec, n=100, strategy=strat, seed=3)
        r = orc.respond(q_half)
        assert 0.45 <= r <= 0.55
        r1 = orc.respond(q_one)
        assert 1 - 1 / 100 <= r1 <= 1 + 1 / 100
        assert orc.queries_used == 2


def test_maxshift_saturates_envelope():
    spec = _sym_spec()
    stat = _entry_stat(4)
    q = IndicatorQuery(stat=stat, threshold=stat.mean_under(spec), tag="half")
    orc = VstatOracle(spec, n=400, strategy=Strategy.MAX_SHIFT)
    assert math.isclose(orc.respond(q), 0.5 + vstat_envelope(0.5, 400))
    orc_neg = VstatOracle(spec, n=400, strategy=Strategy.MAX_SHIFT, shift_sign=-1)
    assert math.isclose(orc_neg.respond(q), 0.5 - vstat_envelope(0.5, 400))


def test_nullmimic_returns_projected_null_mean():
    spec = _sym_spec(d=8, seed=2)
    stat = _entry_stat(8)
    q = IndicatorQuery(stat=stat, threshold=0.0, tag="e")
    mu = q.true_mean(spec)
    mu0 = q.true_mean(spec.as_null())
    # big n: projection binds at the envelope edge
    orc = VstatOracle(spec, n=10 ** 8, strategy=Strategy.NULL_MIMIC)
    r = orc.respond(q)
    assert math.isclose(r, mu - math.copysign(vstat_envelope(mu, 10 ** 8), mu - mu0))
    # small n: the null mean itself is legal and returned verbatim
    orc = VstatOracle(spec, n=4, strategy=Strategy.NULL_MIMIC)
    assert math.isclose(orc.respond(q), mu0)


def test_unit_query_validation_and_budget():
    spec = _sym_spec()
    bq = BoundedQuery(stat=_entry_stat(4), bound=2.0)
    orc = VstatOracle(spec, n=100)
    with pytest.raises(NotUnitQuery):
        orc.respond(bq)
    orc_capped = VstatOracle(spec, n=100, query_cap=1)
    q = IndicatorQuery(stat=_entry_stat(4), threshold=0.0)
    orc_capped.respond(q)
    with pytest.raises(BudgetExceeded):
        orc_capped.respond(q)


def test_ledger_and_transcript_replay():
    spec = _sym_spec()
    q = BoundedQuery(stat=_entry_stat(4), bound=2.0)

    def run():
        orc = VstatOracle(spec, n=5000, strategy=Strategy.EMPIRICAL_CLAMPED, seed=9)
        estimate_mean(orc, q)
        return orc

    a, b = run(), run()
    assert a.queries_used == b.queries_used > 0
    assert [e.response for e in a.transcript] == [e.response for e in b.transcript]
    counts = [len(a.transcript)]
    assert counts[0] == a.queries_used  # ledger matches transcript


def test_estimate_mean_deterministic_query():
    spec = _sym_spec()
    q = BoundedQuery(stat=AffineStat(np.zeros((4, 4)), offset=0.3), bound=0.1, tag="const")
    for strat in (Strategy.EXACT, Strategy.MAX_SHIFT, Strategy.NULL_MIMIC):
        orc = VstatOracle(spec, n=100, strategy=strat)
        est = estimate_mean(orc, q)
        assert abs(est.value - 0.3) <= 1.0 / (4 * 100)


def test_estimate_mean_trace_like_query():
    # Gaussian query with mean 1 and variance d^(k/2), n >> d^(k/2) log^2 n
    d = 16
    spec = _sym_spec(d=d, seed=4)
    w = np.eye(d)
    q = BoundedQuery(stat=AffineStat(w), bound=d + 1.0, tag="trace")
    n = 400 * d * int(math.log(400 * d) ** 2)
    orc = VstatOracle(spec, n=n, strategy=Strategy.MAX_SHIFT)
    est = estimate_mean(orc, q)
    assert abs(est.value - 1.0) <= 0.1


def test_estimate_mean_indicator_shortcut():
    # 0/1 query with known mean 0.25: single call, envelope = guarantee
    d = 4
    spec = _sym_spec(d=d, seed=6)
    stat = _entry_stat(d)
    thr = stat.mean_under(spec) + stat.std_under(spec) * 0.6744897501960817  # Phi^-1(.75)
    q = IndicatorQuery(stat=stat, threshold=thr, tag="quartile")
    n = 10 ** 6
    assert math.isclose(q.true_mean(spec), 0.25, abs_tol=1e-12)
    var = 0.25 * 0.75
    for strat in (Strategy.MAX_SHIFT, Strategy.EMPIRICAL_CLAMPED):
        orc = VstatOracle(spec, n=n, strategy=strat, seed=8)
        est = estimate_mean(orc, q)
        assert est.queries_used == 1
        # numeric evaluation of the guarantee at these parameters
        assert abs(est.value - 0.25) <= 8 * math.log(n) * math.sqrt(var / n) + 1.0 / (4 * n)


def test_estimate_mean_guarantee_randomized():
    # miniature of the acceptance sweep: random Gaussian queries/strategies
    rng = np.random.default_rng(10)
    worst_ratio = 0.0
    for trial in range(60):
        d = int(rng.integers(2, 5))
        spec = _sym_spec(d=d, seed=int(rng.integers(10 ** 6)))
        w = rng.standard_normal((d, d))
        b = float(rng.normal(0, 2))
        stat = AffineStat(w, b)
        mu = stat.mean_under(spec)
        var = stat.std_under(spec) ** 2
        q = BoundedQuery(stat=stat, bound=mu ** 2 + var + 1e-9, tag="rand")
        n = int(rng.choice([64, 1024, 10 ** 5]))
        strat = rng.choice(list(Strategy))
        orc = VstatOracle(spec, n=n, strategy=strat, seed=int(rng.integers(10 ** 6)))
        xi = 1.0 / (4 * n)
        est = estimate_mean(orc, q, xi=xi)
        guar = 8 * math.log(n) * math.sqrt(var / n) + xi
        assert abs(est.value - mu) <= guar
        assert est.queries_used <= mean_estimation_query_budget(n, q.bound, xi) + 5
        worst_ratio = max(worst_ratio, abs(est.value - mu) / guar)
    assert worst_ratio <= 1.0


def test_bad_bound_detection():
    spec = _sym_spec()
    # mean 10 with declared E q^2 <= 1 is impossible
    q = BoundedQuery(stat=AffineStat(np.zeros((4, 4)), offset=10.0), bound=1.0)
    orc = VstatOracle(spec, n=10 ** 4)
    with pytest.raises(BadBound):
        estimate_mean(orc, q)


def test_user_query_quadrature():
    spec = _sym_spec(d=4, seed=12)
    stat = _entry_stat(4)
    q = UserUnitQuery(stat=stat, fn=lambda x: 1.0 / (1.0 + math.exp(-x)), tag="logistic")
    # oracle: dense numeric integration on a wide grid
    m, s = stat.mean_under(spec), stat.std_under(spec)
    grid = np.linspace(-10, 10, 40001)
    dens = np.exp(-0.5 * ((grid - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
    target = float(np.trapezoid(dens / (1.0 + np.exp(-grid)), grid))
    assert abs(q.true_mean(spec) - target) < 1e-8
    orc = VstatOracle(spec, n=100)
    r = orc.respond(q)
    assert abs(r - target) < 1e-8  # exact strategy returns the true mean


def test_simulate_downscale_formula_and_legality():
    spec = _sym_spec(d=4, seed=13)
    n1 = 10 ** 6
    orc1 = VstatOracle(spec, n=n1, strategy=Strategy.MAX_SHIFT)
    sim = simulate_downscale(orc1, S=1)
    assert math.isclose(sim.n, n1 / (256 * math.log(n1) ** 2))
    assert sim.spec.sigma2 == spec.sigma2
    stat = _entry_stat(4)
    q = IndicatorQuery(stat=stat, threshold=0.1, tag="i")
    r = sim.respond(q)  # legality asserted inside respond
    assert abs(r - q.true_mean(sim.spec)) <= vstat_envelope(q.true_mean(sim.spec), sim.n) + 1e-12

    # constant query passes through within xi
    qc = SmoothedIndicatorQuery(
        stat=AffineStat(np.zeros((4, 4)), offset=0.0), threshold=-1.0, smooth=1.0, tag="c"
    )
    target = norm_cdf(1.0)
    r = sim.respond(qc)
    assert abs(r - target) <= 1.0 / sim.n


def test_simulate_downscale_randomized_envelope():
    # trace-statistic indicators under both specs, many random thresholds
    d = 4
    spec = _sym_spec(d=d, seed=14)
    n1 = 10 ** 6
    rng = np.random.default_rng(15)
    for S in (1, 4, 16):
        orc1 = VstatOracle(spec, n=n1, strategy=Strategy.MAX_SHIFT, keep_transcript=False)
        sim = simulate_downscale(orc1, S)
        stat = AffineStat(np.eye(d))
        for _ in range(334):
            t = float(rng.normal(1.0, 2.0 * math.sqrt(d)))
            q = IndicatorQuery(stat=stat, threshold=t, tag="tr")
            sim.respond(q)  # raises on any envelope violation
        assert max(sim.inner_counts) <= 9 * math.log(n1 * S)


def test_transcript_export_import(tmp_path):
    spec = _sym_spec(d=3, seed=16)
    orc = VstatOracle(spec, n=50, strategy=Strategy.NULL_MIMIC)
    q = IndicatorQuery(stat=_entry_stat(3), threshold=0.2, tag="e00")
    orc.respond(q)
    path = str(tmp_path / "transcript.jsonl")
    export_transcript(orc.transcript, path)
    back = import_transcript(path)
    assert len(back) == 1
    assert back[0].response == orc.transcript[0].response
    assert back[0].query.true_mean(spec) == pytest.approx(q.true_mean(spec))


def test_dual_legality_of_nullmimic():
    # when the spiked/null mean gap is below the envelope for every
    # transcript query, one response stream is legal for both hypotheses
    d = 8
    spec = _sym_spec(d=d, seed=17)
    n = d / 4.0
    orc = VstatOracle(spec, n=n, strategy=Strategy.NULL_MIMIC)
    even_symmetric_test(orc, LF2)
    assert transcript_violation(orc.transcript, spec, n) <= 0
    assert transcript_violation(orc.transcript, spec.as_null(), n) <= 0


def test_graph_adversary_empty_transcript():
    cert = graph_adversary_certificate([], LF2, d=4, n=100.0)
    assert cert is not None
    assert cert.mean_distance >= 1.0
    assert cert.survivors == 2 ** 4


def test_graph_adversary_resolved_at_huge_n():
    # entrywise mean queries at huge n pin down every hypercube vertex
    d = 3
    spec = null_spec(d, 2)
    orc = VstatOracle(spec, n=10 ** 10, strategy=Strategy.GRAPH_ADVERSARY)
    for i in range(d):
        for j in range(d):
            for t in (-1.5 / d, 0.0, 1.5 / d):
                orc.respond(IndicatorQuery(stat=_entry_stat(d, i, j), threshold=t))
    assert graph_adversary_certificate(orc.transcript, LF2, d=d, n=10 ** 10) is None


def test_graph_adversary_certifies_estimator_transcript():
    # partial-trace estimation transcript at n = d/4 leaves a certified pair
    d = 8
    n = d / 4.0
    spec = null_spec(d, 2)
    orc = VstatOracle(spec, n=n, strategy=Strategy.GRAPH_ADVERSARY)
    sq_estimate(orc, LF2)
    cert = graph_adversary_certificate(orc.transcript, LF2, d=d, n=n)
    assert cert is not None
    assert cert.mean_distance >= 1.0
    assert cert.worst_violation_a <= 0 and cert.worst_violation_b <= 0
    with pytest.raises(TooLarge):
        graph_adversary_certificate(orc.transcript, LF2, d=32, n=n)


def test_downscaled_sample_size_formula():
    n1 = 10 ** 4
    assert math.isclose(downscaled_sample_size(n1, 3), 3 * n1 / (256 * math.log(n1) ** 2))
