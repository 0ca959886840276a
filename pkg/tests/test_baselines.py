"""Baselines: empirical mean, spectral flattening, power iteration, MLE demo."""

import math

import numpy as np
import pytest

from sqtpca.baselines import (
    empirical_mean,
    flatten_spectral,
    mle_value_query_demo,
    power_iteration_multistart,
    tensor_power_iteration,
)
from sqtpca.errors import ZeroIterate
from sqtpca.model import (
    hypercube_factors,
    null_spec,
    reduce_to_sufficient,
    sample,
    spiked_spec,
)
from sqtpca.tensors import flatten, make_labeling


def _spec(assignment, d, sigma2=1.0, seed=0):
    lf = make_labeling(assignment)
    return lf, spiked_spec(lf, hypercube_factors(lf, d, seed=seed), sigma2)


def test_empirical_mean_basics():
    _, spec = _spec((1, 1), 4, sigma2=0.0, seed=1)
    ss = sample(spec, 1, seed=2)
    assert np.array_equal(empirical_mean(ss), ss.samples[0])
    assert np.array_equal(empirical_mean(ss), spec.mean_tensor())
    arr = np.arange(8.0).reshape(2, 2, 2)
    assert np.allclose(empirical_mean(3.0 * arr), 3.0 * empirical_mean(arr))


def test_flatten_spectral_noiseless_exact():
    lf, spec = _spec((1, 1, 1), 8, sigma2=0.0, seed=3)
    t = spec.mean_tensor()
    res = flatten_spectral(t)
    assert math.isclose(res.sigma1, 1.0, abs_tol=1e-10)
    v = spec.factors[0] / math.sqrt(8)
    assert abs(abs(float(res.right @ v)) - 1.0) < 1e-8
    m = flatten(t, [1, 2])
    resid = np.linalg.norm(m - res.sigma1 * np.outer(res.left, res.right))
    assert resid <= 1e-8


def test_flatten_spectral_k3_recovery_rate():
    # sample-complexity regime n = 100 d^(3/2): alignment >= 0.9 usually
    d = 16
    n = int(100 * d ** 1.5)
    hits = 0
    trials = 20
    for trial in range(trials):
        lf, spec = _spec((1, 1, 1), d, seed=100 + trial)
        tbar = reduce_to_sufficient(sample(spec, 64, seed=trial))
        # reduction: mean of 64 draws of D(sigma2/m) matches n = 64 m draws
        tbar = reduce_to_sufficient(
            sample(spiked_spec(lf, spec.factors, sigma2=64.0 / n), 64, seed=trial)
        )
        res = flatten_spectral(tbar, seed=trial)
        v = spec.factors[0] / math.sqrt(d)
        if abs(float(res.right @ v)) >= 0.9:
            hits += 1
    assert hits >= 0.9 * trials


def test_flatten_spectral_null_no_alignment():
    d = 32
    sigmas, aligns = [], []
    for trial in range(15):
        spec = null_spec(d, 2)
        tbar = reduce_to_sufficient(sample(spec, 64, seed=300 + trial))
        res = flatten_spectral(tbar, seed=trial, strict=False)
        lf = make_labeling((1, 1))
        v = hypercube_factors(lf, d, seed=trial)[0] / math.sqrt(d)
        aligns.append(abs(float(res.right @ v)))
        sigmas.append(res.sigma1)
    # top singular value concentrates near the bulk edge 2 sqrt(d/n)
    edge = 2.0 * math.sqrt(d / 64.0)
    assert abs(np.median(sigmas) - edge) / edge < 0.15
    assert np.median(aligns) <= 3.0 / math.sqrt(d)


def test_power_iteration_noiseless_fixed_point():
    d = 6
    lf, spec = _spec((1, 1, 1), d, sigma2=0.0, seed=4)
    t = spec.mean_tensor()
    v = spec.factors[0] / math.sqrt(d)
    rng = np.random.default_rng(5)
    x0 = rng.standard_normal(d)
    x, obj = tensor_power_iteration(t, x0, iters=1)
    assert abs(abs(float(x @ v)) - 1.0) < 1e-12
    assert math.isclose(obj, 1.0, abs_tol=1e-12)


def test_power_iteration_objective_monotone():
    rng = np.random.default_rng(6)
    t = rng.standard_normal((5, 5, 5))
    t = (t + t.transpose(1, 2, 0) + t.transpose(2, 0, 1)
         + t.transpose(0, 2, 1) + t.transpose(1, 0, 2) + t.transpose(2, 1, 0)) / 6
    x = rng.standard_normal(5)
    x /= np.linalg.norm(x)
    objs = []
    for _ in range(30):
        x, obj = tensor_power_iteration(t, x, iters=1)
        objs.append(obj)
    assert all(b >= a - 1e-12 for a, b in zip(objs, objs[1:]))


def test_power_iteration_agrees_with_spectral_k2():
    d = 8
    lf, spec = _spec((1, 1), d, seed=7)
    tbar = reduce_to_sufficient(sample(spec, 200, seed=8))
    sym = (tbar + tbar.T) / 2
    x, _ = power_iteration_multistart(sym, restarts=8, iters=200, seed=9)
    res = flatten_spectral(sym, seed=9)
    assert abs(abs(float(x @ res.right)) - 1.0) < 1e-4


def test_power_iteration_zero_input():
    with pytest.raises(ZeroIterate):
        tensor_power_iteration(np.zeros((3, 3)), np.zeros(3))


def test_mle_demo_zero_noise():
    rep = mle_value_query_demo(6, sigma2=0.0, trials=4, seed=10, restarts=12, iters=40)
    # under the spiked law q == 1 exactly; null value stays near 0
    assert rep["separation"] >= 0.5
    assert rep["passes"]


def test_mle_demo_monotone_in_noise():
    seps = []
    for c in (0.05, 0.4, 2.0):
        rep = mle_value_query_demo(6, sigma2=c / 6, trials=10, seed=11, restarts=10, iters=30)
        seps.append(rep["separation"])
    assert seps[0] >= seps[-1]
    assert seps[0] >= 0.5
