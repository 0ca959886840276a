"""Generative model: null and spiked Gaussian tensor distributions.

Spiked means are rank-one tensors scaled to unit Frobenius norm; noise is
i.i.d. Gaussian with a per-distribution variance.  Includes the sample-size
vs noise-level reductions through the sufficient statistic (the sample
mean tensor).
"""

from __future__ import annotations

import dataclasses
import struct

import numpy as np

from .errors import DimensionMismatch
from .tensors import LabelingFunction, check_size, rank_one

# Stream tags keep independent sampling purposes on disjoint PRNG streams.
_STREAM_DATA = 0x5D
_STREAM_EXPAND = 0x5E


def _rng(seed: int, *path: int) -> np.random.Generator:
    """Deterministic generator for (seed, *path); schedule independent."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclasses.dataclass(frozen=True)
class DistributionSpec:
    """Null or spiked tensor distribution with noise variance sigma2."""

    d: int
    k: int
    sigma2: float
    lf: LabelingFunction | None = None
    factors: np.ndarray | None = None  # (K, d), rows with norm sqrt(d)

    @property
    def spiked(self) -> bool:
        return self.lf is not None

    def mean_tensor(self) -> np.ndarray:
        if not self.spiked:
            return np.zeros((self.d,) * self.k)
        return rank_one(self.factors, self.lf) / self.d ** (self.k / 2.0)

    def as_null(self) -> "DistributionSpec":
        """Same (d, k, sigma2) with the zero mean."""
        return null_spec(self.d, self.k, self.sigma2)


def null_spec(d: int, k: int, sigma2: float = 1.0) -> DistributionSpec:
    check_size(d, k)
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    return DistributionSpec(d=d, k=k, sigma2=float(sigma2))


def spiked_spec(
    lf: LabelingFunction,
    factors,
    sigma2: float = 1.0,
    require_hypercube: bool = False,
) -> DistributionSpec:
    """Spiked distribution with mean rank_one(factors, lf) / d^(k/2).

    Factor rows must have norm sqrt(d) (so the mean tensor has norm 1);
    hypercube entries are optional but are the prior used by all lower
    bounds.
    """
    factors = np.asarray(factors, dtype=float)
    if factors.ndim != 2 or factors.shape[0] != lf.K:
        raise DimensionMismatch(f"factors must be ({lf.K}, d)")
    d = factors.shape[1]
    check_size(d, lf.k)
    norms = np.linalg.norm(factors, axis=1)
    if not np.allclose(norms, np.sqrt(d), rtol=1e-8, atol=1e-8):
        raise DimensionMismatch("every factor must have norm sqrt(d)")
    if require_hypercube and not np.all(np.abs(factors) == 1.0):
        raise DimensionMismatch("factors must lie on the hypercube")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    return DistributionSpec(d=d, k=lf.k, sigma2=float(sigma2), lf=lf, factors=factors)


def hypercube_factors(lf: LabelingFunction, d: int, seed: int, trial: int = 0) -> np.ndarray:
    """Random +-1 factor matrix (K, d), the lower-bound prior."""
    rng = _rng(seed, 0xFA, trial)
    return rng.choice([-1.0, 1.0], size=(lf.K, d))


@dataclasses.dataclass(frozen=True)
class SampleSet:
    """n i.i.d. tensor draws sharing (d, k), with provenance seed."""

    d: int
    k: int
    n: int
    seed: int
    samples: np.ndarray  # (n,) + (d,)*k

    def __post_init__(self):
        if self.samples.shape != (self.n,) + (self.d,) * self.k:
            raise DimensionMismatch("sample array shape mismatch")
        self.samples.setflags(write=False)


def sample(spec: DistributionSpec, n: int, seed: int) -> SampleSet:
    """Draw n i.i.d. tensors; entry (trial, cell) is a fixed PRNG stream."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mean = spec.mean_tensor()
    sd = np.sqrt(spec.sigma2)
    out = np.empty((n,) + (spec.d,) * spec.k)
    for trial in range(n):
        g = _rng(seed, _STREAM_DATA, trial)
        out[trial] = mean + sd * g.standard_normal(mean.shape)
    return SampleSet(d=spec.d, k=spec.k, n=n, seed=seed, samples=out)


def reduce_to_sufficient(samples: SampleSet) -> np.ndarray:
    """Sample mean tensor; one draw of the same spike at variance sigma2/n."""
    return samples.samples.mean(axis=0)


def expand_from_sufficient(tbar: np.ndarray, n: int, sigma2: float, seed: int) -> SampleSet:
    """Regenerate n samples consistent with a given mean tensor.

    Draws G_i i.i.d. N(0, sigma2) and returns T_i = tbar + (G_i - Gbar),
    the conditional law of the sample given its mean.  The output average
    is recentred onto tbar; the residue is floating-point accumulation
    error only (~1e-14 relative; exact equality is unachievable in
    doubles whenever some |tbar| entry is far below the noise scale).
    """
    tbar = np.asarray(tbar, dtype=float)
    if n < 1:
        raise ValueError("n must be >= 1")
    d = tbar.shape[0]
    k = tbar.ndim
    if n == 1:
        return SampleSet(d=d, k=k, n=1, seed=seed, samples=tbar[None].copy())
    g = _rng(seed, _STREAM_EXPAND)
    noise = np.sqrt(sigma2) * g.standard_normal((n,) + tbar.shape)
    noise -= noise.mean(axis=0)
    samples = tbar[None] + noise
    samples -= (samples.mean(axis=0) - tbar)[None]
    return SampleSet(d=d, k=k, n=n, seed=seed, samples=samples)


_MAGIC = b"SQT1"


def save_samples(ss: SampleSet, path: str) -> None:
    """Flat binary layout: magic, d, k, n, seed header + LE float64 payload."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIq", ss.d, ss.k, ss.n, ss.seed))
        fh.write(ss.samples.astype("<f8").tobytes())


def load_samples(path: str) -> SampleSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a sample file")
        d, k, n, seed = struct.unpack("<IIIq", fh.read(20))
        payload = np.frombuffer(fh.read(), dtype="<f8").astype(float)
    samples = payload.reshape((n,) + (d,) * k)
    return SampleSet(d=d, k=k, n=n, seed=seed, samples=samples)


def samples_to_csv(ss: SampleSet, path: str) -> None:
    """One row per sample, one column per cell (row-major); small d only."""
    ncells = ss.d ** ss.k
    if ncells > 4096:
        raise ValueError("CSV export is for small tensors only")
    flat = ss.samples.reshape(ss.n, ncells)
    header = ",".join("c" + format(i, "d") for i in range(ncells))
    with open(path, "w", newline="") as fh:
        fh.write("trial," + header + "\n")
        for t in range(ss.n):
            fh.write(str(t) + "," + ",".join(repr(v) for v in flat[t]) + "\n")
