"""Exhaustive reference evaluation of small stacking-sequence problems.

Everything here enumerates the full label space, guarded against blowup.
The odometer order is big-endian: the first ply is the most significant
digit, so sequence (s_1, ..., s_N) sits at index sum (s_n - 1) d^(N - n).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import SizeGuardError
from .laminate import SsrProblem, StackingSequence
from .mpo import MpoSum

ENUMERATION_GUARD = 10**7
DENSE_GUARD = 2**20
_CHUNK = 1 << 16


def space_size(problem: SsrProblem) -> int:
    return problem.d**problem.n_plies


def sequence_index(seq: StackingSequence | np.ndarray, d: int) -> int:
    labels = seq.array if isinstance(seq, StackingSequence) else np.asarray(seq)
    idx = 0
    for s in labels:
        idx = idx * d + (int(s) - 1)
    return idx


def all_sequences(n_plies: int, d: int, guard: int = ENUMERATION_GUARD) -> np.ndarray:
    """All label sequences as an ``(d^N, N)`` array in odometer order."""
    size = d**n_plies
    if size > guard:
        raise SizeGuardError(f"label space {size} exceeds guard {guard}")
    rows = np.arange(size)
    out = np.empty((size, n_plies), dtype=np.int8 if d < 128 else np.int64)
    for n in range(n_plies):
        out[:, n] = (rows // d ** (n_plies - 1 - n)) % d + 1
    return out


def batch_loss(problem: SsrProblem, labels: np.ndarray) -> np.ndarray:
    """Loss for a batch of sequences, shape ``(batch, N)``."""
    labels = np.asarray(labels)
    table = problem.angle_set.feature_table()
    target = problem.target.values
    out = np.zeros(labels.shape[0])
    for start in range(0, labels.shape[0], _CHUNK):
        chunk = labels[start : start + _CHUNK]
        feats = table[chunk - 1]  # (chunk, N, 4)
        points = np.einsum("bnl,xn->bxl", feats, problem.weights.values)
        out[start : start + _CHUNK] = np.sum((points - target) ** 2, axis=(1, 2))
    return out


def batch_penalty(problem: SsrProblem, labels: np.ndarray) -> np.ndarray:
    """Total weighted penalty for a batch of sequences."""
    labels = np.asarray(labels)
    out = np.zeros(labels.shape[0])
    for spec in problem.constraints:
        out += spec.gamma * spec.measure(labels, problem.angle_set)
    return out


def batch_violations(problem: SsrProblem, labels: np.ndarray) -> np.ndarray:
    """Raw violation counts, one column per constraint."""
    labels = np.asarray(labels)
    cols = [spec.measure(labels, problem.angle_set) for spec in problem.constraints]
    if not cols:
        return np.zeros((labels.shape[0], 0), dtype=np.int64)
    return np.stack(cols, axis=1)


@dataclass
class OracleResult:
    """Outcome of an exhaustive scan.

    ``min_loss`` is the minimal objective (with penalties if requested);
    ``argmin_set`` collects every sequence attaining it within 1e-12.
    """

    min_loss: float
    argmin_set: list[StackingSequence]
    n_evaluated: int
    histogram: tuple[np.ndarray, np.ndarray] | None = None


def exhaustive_min(
    problem: SsrProblem,
    include_penalties: bool = True,
    histogram_bins: int | None = None,
    guard: int = ENUMERATION_GUARD,
) -> OracleResult:
    """Scan the whole label space for the minimal objective."""
    labels = all_sequences(problem.n_plies, problem.d, guard=guard)
    values = batch_loss(problem, labels)
    if include_penalties:
        values = values + batch_penalty(problem, labels)
    min_value = float(values.min())
    argmin = np.flatnonzero(values <= min_value + 1e-12)
    hist = None
    if histogram_bins:
        hist = np.histogram(values, bins=histogram_bins)
    return OracleResult(
        min_loss=min_value,
        argmin_set=[StackingSequence(tuple(int(s) for s in labels[i])) for i in argmin],
        n_evaluated=labels.shape[0],
        histogram=hist,
    )


def dense_diagonal(problem: SsrProblem, terms: MpoSum, guard: int = DENSE_GUARD) -> np.ndarray:
    """Chain values of an MPO sum over the whole label space.

    Entry ``i`` is the summed chain product of the sequence at odometer
    index ``i``; for a loss MPO sum this equals loss plus penalties.
    """
    size = space_size(problem)
    if size > guard:
        raise SizeGuardError(f"label space {size} exceeds guard {guard}")
    if terms.n_sites != problem.n_plies or terms.phys_dim != problem.d:
        raise SizeGuardError("terms do not match the problem dimensions")
    total = np.zeros(size)
    for term in terms.terms:
        acc = term.sites[0][0].T  # (d, b)
        for w in term.sites[1:]:
            acc = np.einsum("pa,abs->psb", acc, w)
            acc = acc.reshape(-1, w.shape[1])
        total += acc[:, 0]
    return total


def enumerate_valid(problem: SsrProblem, guard: int = ENUMERATION_GUARD) -> Iterator[StackingSequence]:
    """Yield all constraint-satisfying sequences in odometer order."""
    labels = all_sequences(problem.n_plies, problem.d, guard=guard)
    for start in range(0, labels.shape[0], _CHUNK):
        chunk = labels[start : start + _CHUNK]
        violations = batch_violations(problem, chunk)
        ok = np.flatnonzero(~np.any(violations > 0, axis=1))
        for i in ok:
            yield StackingSequence(tuple(int(s) for s in chunk[i]))
