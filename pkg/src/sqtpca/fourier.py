"""Verification kernels for the Hermite and Boolean Fourier identities.

Everything here is a numerical check of an identity used by the
lower-bound analysis: Hermite orthonormality and the mean-shift formula,
the closed form for the spiked mean of a Hermite polynomial, Parseval on
the hypercube, and the (2,q)-hypercontractive inequality under the
noise/smoothing operator.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import DegreeCap
from .model import DistributionSpec, _rng

HERMITE_DEGREE_CAP = 8


def hermite_1d(degree: int, x) -> np.ndarray:
    """Orthonormal (probabilists') Hermite values by the stable recurrence
    H_{n+1} = (x H_n - sqrt(n) H_{n-1}) / sqrt(n+1)."""
    if degree < 0 or degree > HERMITE_DEGREE_CAP:
        raise DegreeCap(f"degree {degree} outside 0..{HERMITE_DEGREE_CAP}")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if degree == 0:
        return prev
    cur = x.copy()
    for n in range(1, degree):
        prev, cur = cur, (x * cur - math.sqrt(n) * prev) / math.sqrt(n + 1)
    return cur


def hermite(c, x) -> float:
    """Multivariate orthonormal Hermite value: product over coordinates."""
    c = np.asarray(c, dtype=int).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if c.shape != x.shape:
        raise ValueError("multi-index and point must have the same length")
    out = 1.0
    for ci, xi in zip(c, x):
        out *= float(hermite_1d(int(ci), np.array(xi)))
    return out


def gauss_hermite(npts: int = 64):
    """Nodes/weights for E f(Z), Z standard normal."""
    x, w = np.polynomial.hermite_e.hermegauss(npts)
    return x, w / math.sqrt(2.0 * math.pi)


def hermite_orthonormality_residual(c1, c2, npts: int = 64) -> float:
    """|quadrature E[H_c1(Z) H_c2(Z)] - delta(c1, c2)|, up to 3 active axes."""
    c1 = tuple(int(x) for x in np.atleast_1d(c1))
    c2 = tuple(int(x) for x in np.atleast_1d(c2))
    active = [i for i in range(len(c1)) if c1[i] or c2[i]]
    if len(active) > 3:
        raise DegreeCap("tensorized quadrature supports at most 3 active axes")
    x, w = gauss_hermite(npts)
    val = 1.0
    for i in active:
        vals = hermite_1d(c1[i], x) * hermite_1d(c2[i], x)
        val *= float((w * vals).sum())
    target = 1.0 if c1 == c2 else 0.0
    return abs(val - target)


def hermite_shift_identity_check(mu, c, npts: int = 64) -> float:
    """Residual of E H_c(mu + Z) = mu^c / sqrt(c!), by quadrature."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=int))
    x, w = gauss_hermite(npts)
    val = 1.0
    target = 1.0
    for mui, ci in zip(mu, c):
        ci = int(ci)
        val *= float((w * hermite_1d(ci, mui + x)).sum())
        target *= mui ** ci / math.sqrt(math.factorial(ci))
    return abs(val - target)


def spiked_hermite_mean(spec: DistributionSpec, count: np.ndarray) -> float:
    """Closed form for E_D H_count(T): prod_i v_i^(labelled partial sum)
    over sqrt(d^(k ||count||) count!); needs unit noise."""
    if abs(spec.sigma2 - 1.0) > 1e-12:
        raise ValueError("Hermite means need sigma2 = 1")
    mean = spec.mean_tensor().reshape(-1)
    cflat = np.asarray(count, dtype=int).reshape(-1)
    val = 1.0
    for m, ci in zip(mean, cflat):
        ci = int(ci)
        if ci:
            val *= m ** ci / math.sqrt(math.factorial(ci))
    return val


def spiked_hermite_mean_check(
    spec: DistributionSpec, count: np.ndarray, trials: int = 10 ** 5, seed: int = 0
) -> dict:
    """Monte Carlo estimate of E_D H_count(T) against the closed form."""
    count = np.asarray(count, dtype=int)
    if count.sum() > 4:
        raise DegreeCap("Monte Carlo check supports total degree <= 4")
    closed = spiked_hermite_mean(spec, count)
    mean = spec.mean_tensor()
    rng = _rng(seed, 0xF0)
    draws = mean.reshape(-1)[None, :] + rng.standard_normal((trials, mean.size))
    vals = np.ones(trials)
    cflat = count.reshape(-1)
    for cell in np.flatnonzero(cflat):
        vals *= hermite_1d(int(cflat[cell]), draws[:, cell])
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials))
    return {
        "mc": est,
        "closed_form": closed,
        "stderr": se,
        "within_3se": bool(abs(est - closed) <= 3.0 * se + 1e-12),
    }


# ----------------------------------------------------------------------
# Boolean Fourier / hypercontractivity
# ----------------------------------------------------------------------

def boolean_points(d: int) -> np.ndarray:
    """All 2^d sign vectors, one per row."""
    pts = np.array(list(itertools.product([-1.0, 1.0], repeat=d)))
    return pts


def evaluate_boolean(coeffs: dict, points: np.ndarray) -> np.ndarray:
    """Evaluate sum_r coeffs[r] z^r at every row of points."""
    out = np.zeros(points.shape[0])
    for r, c in coeffs.items():
        mono = np.ones(points.shape[0])
        for i, ri in enumerate(r):
            if ri:
                mono *= points[:, i]
        out += c * mono
    return out


def smooth_coeffs(coeffs: dict, q: int) -> dict:
    """Down-weight the monomial z^r by (q-1)^(-|r|/2)."""
    lam = math.sqrt(q - 1.0)
    return {r: c * lam ** (-sum(r)) for r, c in coeffs.items()}


def hypercontractivity_check(d: int, q: int, trials: int, seed: int = 0) -> dict:
    """E[(T_{1/sqrt(q-1)} f)^q] <= (E f^2)^(q/2) on random sign polynomials.

    Both sides are computed exactly by full 2^d enumeration; coefficients
    are random signs on a random monomial subset.  Returns the violation
    count (must be zero) and the worst LHS/RHS ratio seen.
    """
    if d > 4:
        raise DegreeCap("full enumeration check is for d <= 4")
    if q not in (4, 6):
        raise ValueError("q must be 4 or 6")
    rng = _rng(seed, 0xB0)
    points = boolean_points(d)
    monomials = list(itertools.product([0, 1], repeat=d))
    violations = 0
    worst = 0.0
    for _ in range(trials):
        size = int(rng.integers(1, len(monomials) + 1))
        chosen = rng.choice(len(monomials), size=size, replace=False)
        coeffs = {monomials[i]: float(rng.choice([-1.0, 1.0])) for i in chosen}
        lhs = float(np.mean(evaluate_boolean(smooth_coeffs(coeffs, q), points) ** q))
        # Parseval: E f^2 is exactly the coefficient square sum
        ef2_parseval = sum(c * c for c in coeffs.values())
        ef2_enum = float(np.mean(evaluate_boolean(coeffs, points) ** 2))
        if abs(ef2_parseval - ef2_enum) > 1e-9 * max(1.0, ef2_parseval):
            raise AssertionError("Parseval identity failed on enumerated f")
        rhs = ef2_enum ** (q / 2.0)
        ratio = lhs / rhs
        worst = max(worst, ratio)
        if lhs > rhs * (1.0 + 1e-12):
            violations += 1
    return {"violations": violations, "worst_ratio": worst, "trials": trials}


def run_identity_suite(seed: int = 0) -> list[dict]:
    """Full verification table for the CLI: one pass/fail row per identity."""
    from .model import hypercube_factors, spiked_spec
    from .tensors import make_labeling

    rows = []

    worst = 0.0
    for c1 in itertools.product(range(5), repeat=2):
        for c2 in itertools.product(range(5), repeat=2):
            if sum(c1) <= 4 and sum(c2) <= 4:
                worst = max(worst, hermite_orthonormality_residual(c1, c2))
    rows.append({"check": "hermite_orthonormality", "residual": worst, "pass": worst <= 1e-8})

    rng = _rng(seed, 0xF1)
    worst = hermite_shift_identity_check([2.0], [2])
    for _ in range(100):
        dim = int(rng.integers(1, 4))
        mu = rng.normal(0.0, 1.5, size=dim)
        c = rng.integers(0, 3, size=dim)
        if c.sum() > 4:
            continue
        worst = max(worst, hermite_shift_identity_check(mu, c))
    rows.append({"check": "hermite_shift", "residual": worst, "pass": worst <= 1e-8})

    lf = make_labeling((1, 1))
    fac = hypercube_factors(lf, 2, seed=seed)
    spec = spiked_spec(lf, fac)
    count = np.zeros((2, 2), dtype=int)
    count[0, 0] = 1
    res = spiked_hermite_mean_check(spec, count, trials=10 ** 5, seed=seed)
    rows.append(
        {
            "check": "spiked_hermite_mean",
            "residual": abs(res["mc"] - res["closed_form"]),
            "pass": res["within_3se"],
        }
    )

    hc = hypercontractivity_check(4, 4, trials=500, seed=seed)
    hc6 = hypercontractivity_check(3, 6, trials=500, seed=seed)
    rows.append(
        {
            "check": "hypercontractivity",
            "residual": max(hc["worst_ratio"], hc6["worst_ratio"]),
            "pass": hc["violations"] + hc6["violations"] == 0,
        }
    )
    return rows
