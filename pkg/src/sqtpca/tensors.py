"""Dense order-k tensor arithmetic and mode labellings.

Tensors are plain numpy arrays of shape (d,)*k in row-major order. A
labelling assigns each of the k modes one of K factor labels; its
multiplicities and oddness parameter drive everything downstream.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np

from .errors import (
    BadOrder,
    BadSplit,
    DimensionMismatch,
    EmptyLabel,
    ModeOutOfRange,
    TensorTooLarge,
)

# Hard cap on dense storage; all desk-scale experiments fit well below it.
MAX_ENTRIES = 2 ** 24


def check_size(d: int, k: int, max_entries: int = MAX_ENTRIES) -> None:
    """Raise TensorTooLarge unless a dense (d,)*k array is allowed."""
    if d < 1:
        raise DimensionMismatch(f"side length d={d} must be >= 1")
    if d ** k > max_entries:
        raise TensorTooLarge(f"d**k = {d}**{k} exceeds cap {max_entries}")


@dataclasses.dataclass(frozen=True)
class LabelingFunction:
    """Map from the k tensor modes to K factor labels (all 1-based).

    s[i-1] counts how often label i is used; o counts the labels used an
    odd number of times.  o and k always have the same parity.
    """

    assignment: tuple[int, ...]
    k: int
    K: int
    s: tuple[int, ...]
    o: int

    def modes_of(self, label: int) -> tuple[int, ...]:
        """1-based modes carrying the given label, in increasing order."""
        return tuple(m + 1 for m, lab in enumerate(self.assignment) if lab == label)

    def __str__(self) -> str:
        return "pi(" + ",".join(str(a) for a in self.assignment) + ")"


def make_labeling(assignment) -> LabelingFunction:
    """Build a LabelingFunction from a 1-based label list.

    Labels must be exactly 1..K with every label used at least once.
    """
    assignment = tuple(int(a) for a in assignment)
    k = len(assignment)
    if k < 2:
        raise BadOrder(f"tensor order k={k} must be >= 2")
    K = max(assignment)
    if min(assignment) < 1:
        raise EmptyLabel("labels must be positive (1-based)")
    used = set(assignment)
    missing = [i for i in range(1, K + 1) if i not in used]
    if missing:
        raise EmptyLabel(f"labels {missing} unused; labels must be 1..K with no gaps")
    s = tuple(assignment.count(i) for i in range(1, K + 1))
    o = sum(1 for si in s if si % 2 == 1)
    return LabelingFunction(assignment=assignment, k=k, K=K, s=s, o=o)


def standard_form(lf: LabelingFunction) -> tuple[tuple[int, ...], LabelingFunction]:
    """Reorder modes so equal labels sit in adjacent pairs, unpaired last.

    Returns (perm, lf_std) where perm[a] is the 1-based original mode
    placed at new position a+1.  The pairing is canonical: modes of each
    label are paired in increasing order, pair blocks emitted by label,
    leftover odd modes appended in label order.  Idempotent, and the
    multiset of multiplicities and o are preserved.
    """
    paired: list[int] = []
    unpaired: list[int] = []
    for label in range(1, lf.K + 1):
        modes = list(lf.modes_of(label))
        while len(modes) >= 2:
            paired.append(modes.pop(0))
            paired.append(modes.pop(0))
        if modes:
            unpaired.append(modes[0])
    perm = tuple(paired + unpaired)
    new_assignment = tuple(lf.assignment[m - 1] for m in perm)
    return perm, make_labeling(new_assignment)


def permute_modes(t: np.ndarray, perm) -> np.ndarray:
    """Reorder tensor modes so new mode a carries original mode perm[a].

    Matches standard_form: permute_modes(rank_one(f, lf), perm) equals
    rank_one(f, lf_std).
    """
    return np.transpose(t, axes=[p - 1 for p in perm])


def invert_permutation(perm) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for new_pos, orig in enumerate(perm):
        inv[orig - 1] = new_pos + 1
    return tuple(inv)


def rank_one(factors, lf: LabelingFunction) -> np.ndarray:
    """Outer product v_{pi(1)} x ... x v_{pi(k)} of the K factor vectors."""
    factors = [np.asarray(f, dtype=float) for f in factors]
    if len(factors) != lf.K:
        raise DimensionMismatch(f"expected {lf.K} factors, got {len(factors)}")
    d = factors[0].shape[0]
    for f in factors:
        if f.shape != (d,):
            raise DimensionMismatch("all factors must be length-d vectors")
    check_size(d, lf.k)
    out = factors[lf.assignment[0] - 1]
    for label in lf.assignment[1:]:
        out = np.multiply.outer(out, factors[label - 1])
    return out


def partial_sum(c: np.ndarray, mode: int) -> np.ndarray:
    """Sum of entries over all modes except `mode` (1-based)."""
    k = c.ndim
    if not 1 <= mode <= k:
        raise ModeOutOfRange(f"mode {mode} outside 1..{k}")
    axes = tuple(a for a in range(k) if a != mode - 1)
    return c.sum(axis=axes)


def partial_parity(c: np.ndarray, mode: int) -> np.ndarray:
    return partial_sum(c, mode) % 2


def labeled_sum(c: np.ndarray, lf: LabelingFunction, label: int) -> np.ndarray:
    """Sum of partial sums over all modes carrying `label`."""
    if not 1 <= label <= lf.K:
        raise ModeOutOfRange(f"label {label} outside 1..{lf.K}")
    d = c.shape[0]
    out = np.zeros(d, dtype=c.dtype)
    for mode in lf.modes_of(label):
        out = out + partial_sum(c, mode)
    return out


def labeled_parity(c: np.ndarray, lf: LabelingFunction, label: int) -> np.ndarray:
    return labeled_sum(c, lf, label) % 2


def flatten(t: np.ndarray, row_modes) -> np.ndarray:
    """Reshape into a d^|rows| x d^(k-|rows|) matrix.

    Row (column) multi-indices run row-major over the sorted row
    (column) modes; the reindexing is bijective and norm-preserving.
    """
    k = t.ndim
    d = t.shape[0]
    rows = sorted(set(int(m) for m in row_modes))
    if not rows or len(rows) >= k:
        raise BadSplit("row modes must be a nonempty proper subset of 1..k")
    if rows[0] < 1 or rows[-1] > k:
        raise BadSplit(f"row modes {rows} outside 1..{k}")
    cols = [m for m in range(1, k + 1) if m not in rows]
    order = [m - 1 for m in rows + cols]
    return np.transpose(t, axes=order).reshape(d ** len(rows), d ** len(cols))


def unflatten(m: np.ndarray, d: int, k: int, row_modes) -> np.ndarray:
    """Inverse of flatten for the same (d, k, row_modes)."""
    rows = sorted(set(int(x) for x in row_modes))
    cols = [x for x in range(1, k + 1) if x not in rows]
    t = m.reshape((d,) * k)
    order = [x - 1 for x in rows + cols]
    inv = np.argsort(order)
    return np.transpose(t, axes=inv)


def prior_mean_tensor(lf: LabelingFunction, d: int) -> np.ndarray:
    """Expected rank-one tensor under i.i.d. uniform hypercube factors.

    Entry (j_1..j_k) is 1 exactly when, for every label, each index value
    occurs an even number of times among that label's modes; 0 otherwise.
    For o >= 1 the result is the zero tensor.
    """
    check_size(d, lf.k)
    out = np.ones((d,) * lf.k)
    for label in range(1, lf.K + 1):
        modes = lf.modes_of(label)
        si = len(modes)
        cond = np.zeros((d,) * si)
        for idx in itertools.product(range(d), repeat=si):
            counts = np.bincount(idx, minlength=d)
            cond[idx] = 1.0 if not np.any(counts % 2) else 0.0
        # broadcast the label condition onto the full index space
        shape = [1] * lf.k
        for m in modes:
            shape[m - 1] = d
        expanded = np.ones((d,) * lf.k)
        axes = [m - 1 for m in modes]
        moved = np.moveaxis(expanded, axes, range(si))
        moved *= cond.reshape((d,) * si + (1,) * (lf.k - si))
        out = out * np.moveaxis(moved, range(si), axes)
    return out
