"""Hermite and Boolean Fourier identity kernels."""

import math

import numpy as np
import pytest

from sqtpca.errors import DegreeCap
from sqtpca.fourier import (
    boolean_points,
    evaluate_boolean,
    gauss_hermite,
    hermite,
    hermite_1d,
    hermite_orthonormality_residual,
    hermite_shift_identity_check,
    hypercontractivity_check,
    run_identity_suite,
    smooth_coeffs,
    spiked_hermite_mean,
    spiked_hermite_mean_check,
)
from sqtpca.model import hypercube_factors, spiked_spec
from sqtpca.tensors import make_labeling


def test_hermite_low_degrees():
    x = np.linspace(-3, 3, 7)
    assert np.allclose(hermite_1d(0, x), 1.0)
    assert np.allclose(hermite_1d(1, x), x)
    assert np.allclose(hermite_1d(2, x), (x ** 2 - 1) / math.sqrt(2))
    assert hermite([0, 0], [1.0, 2.0]) == 1.0
    with pytest.raises(DegreeCap):
        hermite_1d(9, x)


def test_orthonormality_by_quadrature():
    for c1 in range(5):
        for c2 in range(5):
            res = hermite_orthonormality_residual([c1], [c2])
            assert res <= 1e-8, (c1, c2)
    # a genuinely multivariate case
    assert hermite_orthonormality_residual([2, 1, 1], [2, 1, 1]) <= 1e-8
    assert hermite_orthonormality_residual([2, 1, 0], [1, 1, 1]) <= 1e-8


def test_shift_identity():
    assert hermite_shift_identity_check([0.0], [2]) <= 1e-10
    # d=1, mu=2, c=2: target 4/sqrt(2)
    x, w = gauss_hermite(64)
    quad = float((w * hermite_1d(2, 2.0 + x)).sum())
    assert math.isclose(quad, 4 / math.sqrt(2), abs_tol=1e-10)
    assert hermite_shift_identity_check([2.0], [2]) <= 1e-8
    rng = np.random.default_rng(3)
    for _ in range(100):
        dim = int(rng.integers(1, 4))
        mu = rng.normal(0, 1.5, size=dim)
        c = rng.integers(0, 3, size=dim)
        if c.sum() > 4:
            continue
        assert hermite_shift_identity_check(mu, c) <= 1e-8


def test_spiked_hermite_mean_closed_form():
    lf = make_labeling((1, 1))
    d = 2
    spec = spiked_spec(lf, hypercube_factors(lf, d, seed=4))
    count = np.zeros((d, d), dtype=int)
    assert spiked_hermite_mean(spec, count) == 1.0  # c = 0 case
    count[0, 0] = 1
    # single count at (1,1): closed form v_1^2/d = 1/d
    assert math.isclose(spiked_hermite_mean(spec, count), 1.0 / d)


def test_spiked_hermite_mean_monte_carlo():
    lf = make_labeling((1, 1, 2))
    d = 2
    spec = spiked_spec(lf, hypercube_factors(lf, d, seed=5))
    rng = np.random.default_rng(6)
    for trial in range(3):
        count = np.zeros((d,) * 3, dtype=int)
        cells = rng.integers(0, d, size=(2, 3))
        for cell in cells:
            count[tuple(cell)] += 1
        res = spiked_hermite_mean_check(spec, count, trials=2 * 10 ** 5, seed=trial)
        assert res["within_3se"], res


def test_parseval_and_smoothing():
    pts = boolean_points(3)
    coeffs = {(1, 1, 0): 2.0, (0, 0, 1): -1.0, (0, 0, 0): 0.5}
    vals = evaluate_boolean(coeffs, pts)
    assert math.isclose(float(np.mean(vals ** 2)), 4.0 + 1.0 + 0.25)
    smoothed = smooth_coeffs(coeffs, 4)
    assert math.isclose(smoothed[(1, 1, 0)], 2.0 / 3.0)
    assert math.isclose(smoothed[(0, 0, 1)], -1.0 / math.sqrt(3))
    assert math.isclose(smoothed[(0, 0, 0)], 0.5)


def test_hypercontractivity_monomial_case():
    # single monomial z1 z2 at q=4: smoothing scales it by 1/3, so the
    # exact enumerated LHS is (1/3)^4, strictly below RHS = 1
    pts = boolean_points(2)
    coeffs = {(1, 1): 1.0}
    lhs = float(np.mean(evaluate_boolean(smooth_coeffs(coeffs, 4), pts) ** 4))
    assert math.isclose(lhs, (1.0 / 3.0) ** 4)
    assert lhs <= 1.0


def test_hypercontractivity_constant_equality():
    pts = boolean_points(2)
    coeffs = {(0, 0): 0.7}
    lhs = float(np.mean(evaluate_boolean(smooth_coeffs(coeffs, 4), pts) ** 4))
    rhs = float(np.mean(evaluate_boolean(coeffs, pts) ** 2)) ** 2
    assert math.isclose(lhs, rhs)


def test_hypercontractivity_random():
    rep = hypercontractivity_check(3, 4, trials=200, seed=7)
    assert rep["violations"] == 0
    assert rep["worst_ratio"] <= 1.0 + 1e-12


def test_identity_suite_passes():
    rows = run_identity_suite(seed=0)
    assert len(rows) == 4
    assert all(row["pass"] for row in rows)
